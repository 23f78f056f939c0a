"""Keypoint overlays and a small raster line chart."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from .core import check_image
from .keypoints import Keypoint

# detectors whose sigma comes from a scale-selection step (or a fitted region)
SCALE_SELECTING = {"harris", "frobenius", "relaxed_harris", "relaxed_frobenius", "hessian", "dog", "mser", "ssr"}
SQUARE_SIDE_PER_SIGMA = 4.0

_COLORS = {"max": (255, 40, 40), "min": (40, 120, 255), "none": (40, 220, 40)}


def _rgb(img: np.ndarray) -> Image.Image:
    arr = np.clip(np.round(check_image(img) * 255.0), 0, 255).astype(np.uint8)
    return Image.fromarray(np.repeat(arr[:, :, None], 3, axis=2))


def visualize_keypoints(
    img: np.ndarray, keypoints: Sequence[Keypoint], first_scale_only: bool = False
) -> tuple[np.ndarray, int]:
    """Overlay keypoints on a gray image.

    Scale-selecting detectors get circles of radius sigma, fixed-scale ones
    get squares with side proportional to sigma.  Returns the RGB uint8
    overlay and the number of markers drawn."""
    canvas = _rgb(img)
    draw = ImageDraw.Draw(canvas)
    n = 0
    for kp in keypoints:
        if first_scale_only and kp.scale_index != 0:
            continue
        color = _COLORS.get(kp.polarity, _COLORS["none"])
        if kp.base_detector in SCALE_SELECTING:
            r = max(1.0, kp.sigma)
            draw.ellipse([kp.x - r, kp.y - r, kp.x + r, kp.y + r], outline=color)
        else:
            h = max(1.0, SQUARE_SIDE_PER_SIGMA * kp.sigma / 2.0)
            draw.rectangle([kp.x - h, kp.y - h, kp.x + h, kp.y + h], outline=color)
        n += 1
    return np.asarray(canvas), n


def line_plot(
    xs: Sequence[float],
    ys: Sequence[float],
    xlabel: str = "N",
    ylabel: str = "mAP",
    size: tuple[int, int] = (480, 320),
) -> np.ndarray:
    """Polyline of (x, y) points with labelled axes on a white canvas."""
    w, h = size
    left, right, top, bottom = 56, 16, 16, 40
    im = Image.new("RGB", (w, h), (255, 255, 255))
    draw = ImageDraw.Draw(im)
    font = ImageFont.load_default()
    draw.line([(left, top), (left, h - bottom), (w - right, h - bottom)], fill=(0, 0, 0))
    pts = [(float(x), float(y)) for x, y in zip(xs, ys) if y is not None and np.isfinite(y)]
    if pts:
        x0, x1 = min(p[0] for p in pts), max(p[0] for p in pts)
        y0, y1 = min(p[1] for p in pts), max(p[1] for p in pts)
        if x1 == x0:
            x0, x1 = x0 - 1.0, x1 + 1.0
        if y1 == y0:
            y0, y1 = y0 - 0.05, y1 + 0.05
        pw, ph = w - left - right, h - top - bottom

        def to_px(x, y):
            return left + (x - x0) / (x1 - x0) * pw, h - bottom - (y - y0) / (y1 - y0) * ph

        pix = [to_px(x, y) for x, y in sorted(pts)]
        if len(pix) > 1:
            draw.line(pix, fill=(200, 30, 30), width=2)
        for px, py in pix:
            draw.ellipse([px - 3, py - 3, px + 3, py + 3], outline=(200, 30, 30), fill=(200, 30, 30))
        draw.text((left, h - bottom + 4), f"{x0:.4g}", fill=(0, 0, 0), font=font)
        draw.text((w - right - 40, h - bottom + 4), f"{x1:.4g}", fill=(0, 0, 0), font=font)
        draw.text((4, h - bottom - 10), f"{y0:.3f}", fill=(0, 0, 0), font=font)
        draw.text((4, top), f"{y1:.3f}", fill=(0, 0, 0), font=font)
    draw.text((w // 2, h - 14), xlabel, fill=(0, 0, 0), font=font)
    draw.text((4, h // 2), ylabel, fill=(0, 0, 0), font=font)
    return np.asarray(im)


def save_rgb(path, arr: np.ndarray) -> None:
    Image.fromarray(np.asarray(arr, dtype=np.uint8)).save(path, format="PNG")
