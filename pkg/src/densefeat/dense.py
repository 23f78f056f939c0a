"""Dense detectors: regular grid, dense interest points (one argmax per cell)
and local maxima of the dense SIFT-norm response."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import NeighborhoodKind, build_scale_stack, check_image, extrema_mask
from .descriptor import DEFAULT_PATCH, dense_sift_norm_map
from .interest import HarrisParams, harris_matrix_response
from .keypoints import Keypoint


@dataclass(frozen=True)
class DenseParams:
    delta_xy: int = 8
    n_scales: int = 5

    def __post_init__(self):
        if self.delta_xy < 1 or self.n_scales < 1:
            raise ValueError("DenseParams requires delta_xy >= 1 and n_scales >= 1")


@dataclass(frozen=True)
class DenseIpParams:
    cell: int = 8
    search_scales: int = 3
    response_kind: str = "frobenius"

    def __post_init__(self):
        if self.cell < 2:
            raise ValueError("cell must be >= 2")
        if self.search_scales < 1:
            raise ValueError("search_scales must be >= 1")
        if self.response_kind not in ("harris", "frobenius"):
            raise ValueError(f"unknown response kind {self.response_kind!r}")


@dataclass(frozen=True)
class L2NormParams:
    tau: float = 0.0
    n_scales: int = 5
    stride: int = 1
    patch_size: int = DEFAULT_PATCH

    def __post_init__(self):
        if self.tau < 0 or self.n_scales < 1 or self.stride < 1:
            raise ValueError("L2NormParams requires tau >= 0, n_scales >= 1, stride >= 1")


def grid_positions(length: int, delta: int) -> np.ndarray:
    return np.arange(delta // 2, length, delta)


def detect_dense_grid(img: np.ndarray, p: DenseParams = DenseParams()) -> list[Keypoint]:
    stack = build_scale_stack(check_image(img), p.n_scales)
    kps = []
    for level, limg in enumerate(stack.levels):
        f = stack.level_scale[level]
        h, w = limg.shape
        for y in grid_positions(h, p.delta_xy).tolist():
            for x in grid_positions(w, p.delta_xy).tolist():
                kps.append(Keypoint(x * f, y * f, f, 0.0, level, "dense", "none"))
    return kps


def detect_dense_ip(img: np.ndarray, p: DenseIpParams = DenseIpParams()) -> list[Keypoint]:
    """One keypoint per cell of the original image plane: the argmax of the
    Harris/Frobenius response over all pixels of all searched levels that fall
    in the cell.  Ties go to the smaller level, then the smaller row-major index."""
    img = check_image(img)
    h0, w0 = img.shape
    stack = build_scale_stack(img, p.search_scales)
    hp = HarrisParams(use_frobenius=(p.response_kind == "frobenius"))
    ncx = -(-w0 // p.cell)
    vals, levels, flat_idx, cells, lxs, lys = [], [], [], [], [], []
    for level, limg in enumerate(stack.levels):
        f = stack.level_scale[level]
        resp = harris_matrix_response(limg, hp)
        h, w = resp.shape
        ys, xs = np.divmod(np.arange(h * w), w)
        cx = np.minimum((xs * f) // p.cell, ncx - 1).astype(np.int64)
        cy = np.minimum((ys * f) // p.cell, -(-h0 // p.cell) - 1).astype(np.int64)
        vals.append(resp.ravel())
        levels.append(np.full(h * w, level))
        flat_idx.append(np.arange(h * w))
        cells.append(cy * ncx + cx)
        lxs.append(xs)
        lys.append(ys)
    vals, levels, flat_idx, cells = map(np.concatenate, (vals, levels, flat_idx, cells))
    lxs, lys = np.concatenate(lxs), np.concatenate(lys)
    # lexsort: last key is primary
    order = np.lexsort((flat_idx, levels, -vals, cells))
    first = np.ones(order.size, dtype=bool)
    first[1:] = cells[order[1:]] != cells[order[:-1]]
    best = order[first]
    kps = []
    for i in best.tolist():
        lv = int(levels[i])
        f = stack.level_scale[lv]
        kps.append(Keypoint(float(lxs[i] * f), float(lys[i] * f), f, float(vals[i]), lv, "dense_ip", "max"))
    return kps


def l2norm_response_maps(img: np.ndarray, p: L2NormParams = L2NormParams()):
    stack = build_scale_stack(check_image(img), p.n_scales)
    return stack, [dense_sift_norm_map(limg, p.patch_size) for limg in stack.levels]


def detect_dense_l2norm(img: np.ndarray, p: L2NormParams = L2NormParams()) -> list[Keypoint]:
    """Strict 3x3 maxima (>= tau) of the raw SIFT norm evaluated at every
    ``stride``-th pixel of each pyramid level."""
    stack, maps = l2norm_response_maps(img, p)
    kps = []
    s = p.stride
    for level, resp in enumerate(maps):
        f = stack.level_scale[level]
        sub = resp[::s, ::s]
        ys, xs = np.nonzero(extrema_mask(sub, NeighborhoodKind.STRICT_3X3, "max", p.tau))
        vals = sub[ys, xs]
        kps.extend(
            Keypoint(x * s * f, y * s * f, f, v, level, "dense_l2", "max")
            for x, y, v in zip(xs.tolist(), ys.tolist(), vals.tolist())
        )
    return kps
