"""Image substrate shared by every detector: loading, resampling, Gaussian
scale space, derivatives and local-extremum search.

Images are plain 2-D ``float64`` numpy arrays indexed ``[y, x]`` with
intensities in [0, 1].  All convolutions use mirror borders (``d c b | a b c d``).
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

LUMA_WEIGHTS = (0.299, 0.587, 0.114)
DEFAULT_TARGET_AREA = 150_000
STACK_PRE_BLUR = 0.8
STACK_MIN_SIDE = 8
LEVEL_FACTOR = math.sqrt(2.0)


class NeighborhoodKind(enum.Enum):
    STRICT_3X3 = "strict3x3"
    RELAXED_2DIR = "relaxed2dir"
    CUBE_3X3X3 = "cube3x3x3"


def check_image(img) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D gray image, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError("image has a zero dimension")
    if not np.isfinite(arr).all():
        raise ValueError("image contains non-finite values")
    return arr


def to_grayscale(image) -> np.ndarray:
    """Convert a decoded raster (H×W, H×W×3 or H×W×4) to a gray image in [0, 1].

    Integer rasters are treated as 8-bit (divided by 255); float rasters are
    assumed to already be in [0, 1].
    """
    arr = np.asarray(image)
    if arr.ndim not in (2, 3) or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError(f"cannot convert raster of shape {arr.shape}")
    if np.issubdtype(arr.dtype, np.integer) or arr.dtype == np.bool_:
        scale = 255.0 if arr.dtype != np.uint16 else 65535.0
        arr = arr.astype(np.float64) / scale
    else:
        arr = arr.astype(np.float64)
    if arr.ndim == 3:
        if arr.shape[2] == 1:
            arr = arr[:, :, 0]
        elif arr.shape[2] in (3, 4):
            w = np.asarray(LUMA_WEIGHTS)
            arr = arr[:, :, :3] @ w
        else:
            raise ValueError(f"unsupported channel count {arr.shape[2]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("raster contains non-finite values")
    return np.clip(arr, 0.0, 1.0)


def load_image(path: str | Path) -> np.ndarray:
    """Read a PNG or 8-bit PGM file as a gray image."""
    with Image.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I"):
            raw = np.asarray(im, dtype=np.float64) / 65535.0
            return to_grayscale(raw)
        if im.mode not in ("L", "RGB", "RGBA", "LA", "P", "1"):
            im = im.convert("RGB")
        if im.mode in ("P", "LA", "1"):
            im = im.convert("RGB" if im.mode == "P" else "L")
        return to_grayscale(np.asarray(im))


def save_image(path: str | Path, img: np.ndarray) -> None:
    arr = np.clip(np.round(check_image(img) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path)


def resize_bilinear(img: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Pixel-centre aligned bilinear resize to ``shape = (height, width)``."""
    img = check_image(img)
    h, w = img.shape
    nh, nw = int(shape[0]), int(shape[1])
    ys = (np.arange(nh) + 0.5) * (h / nh) - 0.5
    xs = (np.arange(nw) + 0.5) * (w / nw) - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return ndimage.map_coordinates(img, [yy, xx], order=1, mode="nearest")


def downsample_to_area(img: np.ndarray, target_area: int = DEFAULT_TARGET_AREA) -> np.ndarray:
    img = check_image(img)
    h, w = img.shape
    if h * w <= target_area:
        return img
    f = math.sqrt(target_area / (h * w))
    nh = max(1, int(round(h * f)))
    nw = max(1, int(round(w * f)))
    return resize_bilinear(img, (nh, nw))


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    img = check_image(img)
    if not math.isfinite(sigma):
        raise ValueError(f"sigma must be finite, got {sigma}")
    if sigma <= 0:
        warnings.warn(f"gaussian_blur called with sigma={sigma}; returning the input", stacklevel=2)
        return img.copy()
    k = gaussian_kernel(sigma)
    out = ndimage.correlate1d(img, k, axis=0, mode="mirror")
    return ndimage.correlate1d(out, k, axis=1, mode="mirror")


# Derivative values below this are rounding residue (a blurred, decimated
# constant image is flat only to ~1e-16); snapping them to zero keeps flat
# regions free of spurious strict extrema.
DERIVATIVE_FLOOR = 1e-12


def snap_to_zero(a: np.ndarray, floor: float = DERIVATIVE_FLOOR) -> np.ndarray:
    """Set entries with magnitude below ``floor`` to exactly zero, in place."""
    a[np.abs(a) < floor] = 0.0
    return a


def _central_diff(a: np.ndarray, axis: int) -> np.ndarray:
    return ndimage.correlate1d(a, [-0.5, 0.0, 0.5], axis=axis, mode="mirror")


def gradients(img: np.ndarray, sigma_d: float) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference derivatives ``(Lx, Ly)`` of the σ_d-smoothed image."""
    if sigma_d <= 0:
        raise ValueError("sigma_d must be > 0")
    smooth = gaussian_blur(img, sigma_d)
    return snap_to_zero(_central_diff(smooth, 1)), snap_to_zero(_central_diff(smooth, 0))


def second_derivatives(img: np.ndarray, sigma_d: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(Lxx, Lyy, Lxy)`` of the σ_d-smoothed image by finite differences."""
    smooth = gaussian_blur(img, sigma_d)
    lxx = ndimage.correlate1d(smooth, [1.0, -2.0, 1.0], axis=1, mode="mirror")
    lyy = ndimage.correlate1d(smooth, [1.0, -2.0, 1.0], axis=0, mode="mirror")
    lxy = _central_diff(_central_diff(smooth, 1), 0)
    return snap_to_zero(lxx), snap_to_zero(lyy), snap_to_zero(lxy)


@dataclass(frozen=True)
class ScaleStack:
    """Multi-scale pyramid with two levels per octave.

    Level ``i`` pixel ``(x, y)`` corresponds to original pixel
    ``(x * factor_i, y * factor_i)`` with ``factor_i = sqrt(2) ** i``.
    """

    levels: tuple[np.ndarray, ...]
    level_scale: tuple[float, ...]

    @property
    def n_sigma(self) -> int:
        return len(self.levels)

    def __len__(self) -> int:
        return len(self.levels)

    def to_original(self, x, y, level: int):
        f = self.level_scale[level]
        return np.asarray(x, dtype=np.float64) * f, np.asarray(y, dtype=np.float64) * f

    def to_level(self, x, y, level: int):
        f = self.level_scale[level]
        return np.asarray(x, dtype=np.float64) / f, np.asarray(y, dtype=np.float64) / f


def _decimate(img: np.ndarray) -> np.ndarray | None:
    h, w = img.shape
    nh, nw = int(round(h / LEVEL_FACTOR)), int(round(w / LEVEL_FACTOR))
    if nh < STACK_MIN_SIDE or nw < STACK_MIN_SIDE:
        return None
    blurred = gaussian_blur(img, STACK_PRE_BLUR)
    ys = np.arange(nh) * LEVEL_FACTOR
    xs = np.arange(nw) * LEVEL_FACTOR
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return ndimage.map_coordinates(blurred, [yy, xx], order=1, mode="nearest")


def build_scale_stack(img: np.ndarray, n_sigma: int = 5) -> ScaleStack:
    img = check_image(img)
    if n_sigma < 1:
        raise ValueError("n_sigma must be >= 1")
    levels = [img]
    while len(levels) < n_sigma:
        nxt = _decimate(levels[-1])
        if nxt is None:
            break
        levels.append(nxt)
    scales = tuple(LEVEL_FACTOR**i for i in range(len(levels)))
    return ScaleStack(levels=tuple(levels), level_scale=scales)


# (dy, dx) offset pairs for the four directional 2-neighborhoods
_DIRECTIONS = (((0, -1), (0, 1)), ((-1, 0), (1, 0)), ((-1, 1), (1, -1)), ((-1, -1), (1, 1)))
_RING = tuple((dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dy, dx) != (0, 0))


def _shifted(a: np.ndarray, dy: int, dx: int) -> np.ndarray:
    h, w = a.shape
    return a[1 + dy : h - 1 + dy, 1 + dx : w - 1 + dx]


def extrema_mask(resp: np.ndarray, kind: NeighborhoodKind, polarity: str, threshold: float = -np.inf) -> np.ndarray:
    """Boolean mask of local maxima (``polarity='max'``) or minima (``'min'``).

    Maxima must also satisfy ``resp >= threshold``, minima ``resp <= -threshold``.
    The one-pixel image frame never qualifies.
    """
    resp = np.asarray(resp, dtype=np.float64)
    if polarity not in ("max", "min"):
        raise ValueError(f"polarity must be 'max' or 'min', got {polarity!r}")
    mask = np.zeros(resp.shape, dtype=bool)
    h, w = resp.shape
    if h < 3 or w < 3:
        return mask
    a = resp if polarity == "max" else -resp
    c = a[1:-1, 1:-1]
    if kind is NeighborhoodKind.STRICT_3X3:
        inner = np.ones(c.shape, dtype=bool)
        for dy, dx in _RING:
            inner &= c > _shifted(a, dy, dx)
    elif kind is NeighborhoodKind.RELAXED_2DIR:
        inner = np.zeros(c.shape, dtype=bool)
        for (dy1, dx1), (dy2, dx2) in _DIRECTIONS:
            inner |= (c > _shifted(a, dy1, dx1)) & (c > _shifted(a, dy2, dx2))
    else:
        raise ValueError("3x3x3 extrema are searched by the DoG detector on a layer stack")
    inner &= c >= threshold
    mask[1:-1, 1:-1] = inner
    return mask


def local_extrema(resp: np.ndarray, kind: NeighborhoodKind, threshold: float, polarity: str = "max"):
    """List of ``(x, y, response)`` local extrema in row-major order.

    ``polarity='both'`` returns the maxima followed by the minima.
    """
    resp = np.asarray(resp, dtype=np.float64)
    pols = ("max", "min") if polarity == "both" else (polarity,)
    out = []
    for pol in pols:
        ys, xs = np.nonzero(extrema_mask(resp, kind, pol, threshold))
        out.extend((int(x), int(y), float(resp[y, x])) for y, x in zip(ys, xs))
    return out
