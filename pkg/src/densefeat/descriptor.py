"""Measurement regions, patch extraction and up-right SIFT description.

Raw SIFT vectors are gradient-magnitude histograms in 8-bit intensity units
(patch values times 255), without clipping or normalization, so their norm
can serve as an interestingness measure and as a filtering criterion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage

from .core import DERIVATIVE_FLOOR, ScaleStack, check_image, snap_to_zero
from .keypoints import Keypoint

N_CELLS = 4
N_ORIENT = 8
DIM = N_CELLS * N_CELLS * N_ORIENT
INTENSITY_SCALE = 255.0
DEFAULT_PATCH = 41
L2_FILTER_T = 5000.0

# s as a function of the patch side p, per detector family
SCALING_RULES = {
    "dense": lambda p: (p - 1) / 20.0,
    "region": lambda p: (p - 1) / 20.0,
    "laplace": lambda p: p / 2.88,
    "edge": lambda p: (p - 1) / 3.0,
    "zernike": lambda p: p / 11.0,
}

DETECTOR_FAMILY = {
    "dense": "dense",
    "dense_ip": "dense",
    "hessian": "region",
    "mser": "region",
    "ssr": "region",
    "harris": "laplace",
    "frobenius": "laplace",
    "relaxed_harris": "laplace",
    "relaxed_frobenius": "laplace",
    "dog": "laplace",
    "dense_l2": "edge",
    "mser_edge": "edge",
    "ssr_edge": "edge",
    "fast_edge": "edge",
    "zernike": "zernike",
}

# detection radius per unit of keypoint sigma; fixed-scale detectors use half
# their unit size so that s = 1 reproduces the unscaled detection region
DETECTION_RADIUS = {
    "dense": 10.0,
    "dense_ip": 10.0,
    "hessian": 3.0,
    "mser": 1.0,
    "ssr": 1.0,
    "harris": 1.0,
    "frobenius": 1.0,
    "relaxed_harris": 1.0,
    "relaxed_frobenius": 1.0,
    "dog": 1.0,
    "dense_l2": 1.5,
    "mser_edge": 1.5,
    "ssr_edge": 1.5,
    "fast_edge": 1.5,
    "zernike": 5.5,
}


def family_of(detector_id: str) -> str:
    base = detector_id.split(":", 1)[0]
    try:
        return DETECTOR_FAMILY[base]
    except KeyError:
        raise ValueError(f"unknown detector {detector_id!r}") from None


def patch_to_scale(family: str, p: int) -> float:
    """Scaling factor s between measurement and detection region for patch side p."""
    if family in DETECTOR_FAMILY and family not in SCALING_RULES:
        family = DETECTOR_FAMILY[family]
    if family not in SCALING_RULES:
        raise ValueError(f"unknown detector family {family!r}")
    if p < 5:
        raise ValueError("patch side must be >= 5")
    return SCALING_RULES[family](p)


def measurement_radius(kp: Keypoint, p: int = DEFAULT_PATCH) -> float:
    base = kp.base_detector
    if base not in DETECTION_RADIUS:
        raise ValueError(f"unknown detector {kp.detector_id!r}")
    return patch_to_scale(family_of(base), p) * DETECTION_RADIUS[base] * kp.sigma


def _sample_grid(cx, cy, radius, p):
    t = np.linspace(-1.0, 1.0, p)
    offs = t[None, :] * np.asarray(radius, dtype=np.float64)[:, None]
    ys = np.asarray(cy, dtype=np.float64)[:, None, None] + offs[:, :, None]
    xs = np.asarray(cx, dtype=np.float64)[:, None, None] + offs[:, None, :]
    return np.broadcast_arrays(ys, xs)


def _pick_level(stack: ScaleStack, spacing: float) -> int:
    level = 0
    for i, f in enumerate(stack.level_scale):
        if f <= spacing * (1.0 + 1e-9):
            level = i
    return level


def extract_patches(
    img: np.ndarray,
    kps: Sequence[Keypoint],
    p: int = DEFAULT_PATCH,
    stack: ScaleStack | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Bilinearly resample each keypoint's measurement region to p×p.

    Returns ``(patches, kept)`` where ``kept`` indexes the keypoints whose
    region lies inside the image.  With a ``stack``, each patch is read from
    the coarsest level whose pixel spacing does not exceed the sample spacing.
    """
    img = check_image(img)
    h, w = img.shape
    n = len(kps)
    if n == 0:
        return np.zeros((0, p, p)), np.zeros(0, dtype=np.int64)
    xs = np.array([k.x for k in kps])
    ys = np.array([k.y for k in kps])
    rad = np.array([measurement_radius(k, p) for k in kps])
    inside = (xs - rad >= 0) & (ys - rad >= 0) & (xs + rad <= w - 1) & (ys + rad <= h - 1)
    kept = np.flatnonzero(inside)
    patches = np.empty((kept.size, p, p))
    if kept.size == 0:
        return patches, kept
    spacing = 2.0 * rad[kept] / (p - 1)
    if stack is None:
        levels = np.zeros(kept.size, dtype=np.int64)
    else:
        levels = np.array([_pick_level(stack, s) for s in spacing])
    for level in np.unique(levels):
        sel = np.flatnonzero(levels == level)
        idx = kept[sel]
        if stack is None:
            src, f = img, 1.0
        else:
            src, f = stack.levels[level], stack.level_scale[level]
        gy, gx = _sample_grid(xs[idx] / f, ys[idx] / f, rad[idx] / f, p)
        patches[sel] = ndimage.map_coordinates(src, [gy, gx], order=1, mode="nearest")
    return patches, kept


def extract_patch(img, kp: Keypoint, p: int = DEFAULT_PATCH, stack: ScaleStack | None = None):
    """Single-keypoint form of :func:`extract_patches`; ``None`` when discarded."""
    patches, kept = extract_patches(img, [kp], p, stack)
    return patches[0] if kept.size else None


def spatial_weights(p: int) -> np.ndarray:
    """(4, p) per-cell weights along one axis: Gaussian window times the
    linear interpolation weight towards each cell centre."""
    u = np.arange(p, dtype=np.float64) - (p - 1) / 2.0
    width = p / N_CELLS
    centres = (np.arange(N_CELLS) - (N_CELLS - 1) / 2.0) * width
    tri = np.maximum(0.0, 1.0 - np.abs(u[None, :] - centres[:, None]) / width)
    gauss = np.exp(-(u**2) / (2.0 * (p / 2.0) ** 2))
    return tri * gauss[None, :]


def orientation_channels(gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Split gradient magnitude over 8 orientation bins with linear
    interpolation; returns an array with the bin axis prepended."""
    mag = np.hypot(gx, gy)
    ang = np.mod(np.arctan2(gy, gx), 2.0 * math.pi) * (N_ORIENT / (2.0 * math.pi))
    b0 = np.floor(ang).astype(np.int64)
    frac = ang - b0
    b0 %= N_ORIENT
    b1 = (b0 + 1) % N_ORIENT
    out = np.zeros((N_ORIENT, mag.size))
    cols = np.arange(mag.size)
    # b0 != b1 everywhere, so the two scatters never collide
    out[b0.ravel(), cols] = (mag * (1.0 - frac)).ravel()
    out[b1.ravel(), cols] = (mag * frac).ravel()
    return out.reshape((N_ORIENT,) + mag.shape)


def _patch_gradients(patches: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    v = patches * INTENSITY_SCALE
    gx = np.zeros_like(v)
    gy = np.zeros_like(v)
    gx[..., 1:-1, 1:-1] = 0.5 * (v[..., 1:-1, 2:] - v[..., 1:-1, :-2])
    gy[..., 1:-1, 1:-1] = 0.5 * (v[..., 2:, 1:-1] - v[..., :-2, 1:-1])
    floor = DERIVATIVE_FLOOR * INTENSITY_SCALE
    return snap_to_zero(gx, floor), snap_to_zero(gy, floor)


def sift_batch(patches: np.ndarray, chunk: int = 512) -> np.ndarray:
    """Raw up-right SIFT for a stack of square patches, shape (n, 128).

    Layout is (cell row, cell column, orientation).  The outer pixel ring has
    no gradient and contributes nothing.
    """
    patches = np.asarray(patches, dtype=np.float64)
    if patches.ndim == 2:
        patches = patches[None]
    n, ph, pw = patches.shape
    if ph != pw or ph < 8:
        raise ValueError("SIFT needs square patches of side >= 8")
    wts = spatial_weights(ph)
    out = np.empty((n, DIM))
    for start in range(0, n, chunk):
        block = patches[start : start + chunk]
        gx, gy = _patch_gradients(block)
        chans = orientation_channels(gx, gy)  # (8, b, p, p)
        hist = np.einsum("yv,xu,obvu->byxo", wts, wts, chans, optimize=True)
        out[start : start + chunk] = hist.reshape(len(block), DIM)
    return out


def sift(patch: np.ndarray) -> np.ndarray:
    return sift_batch(np.asarray(patch)[None])[0]


def dense_sift_norm_map(level_img: np.ndarray, p: int = DEFAULT_PATCH) -> np.ndarray:
    """ℓ2 norm of the raw SIFT of the p×p patch centred at every pixel.

    Equals ``norm(sift(patch))`` for the exact pixel-grid patch; pixels whose
    patch would leave the image get 0.
    """
    img = check_image(level_img) * INTENSITY_SCALE
    floor = DERIVATIVE_FLOOR * INTENSITY_SCALE
    gx = snap_to_zero(ndimage.correlate1d(img, [-0.5, 0.0, 0.5], axis=1, mode="mirror"), floor)
    gy = snap_to_zero(ndimage.correlate1d(img, [-0.5, 0.0, 0.5], axis=0, mode="mirror"), floor)
    chans = orientation_channels(gx, gy)
    wts = spatial_weights(p)[:, 1:-1]  # the patch ring carries no gradient
    sq = np.zeros(img.shape)
    for o in range(N_ORIENT):
        cols = [ndimage.correlate1d(chans[o], wts[j], axis=1, mode="constant") for j in range(N_CELLS)]
        for col in cols:
            for i in range(N_CELLS):
                cell = ndimage.correlate1d(col, wts[i], axis=0, mode="constant")
                sq += cell * cell
    norm = np.sqrt(sq)
    half = (p - 1) // 2
    h, w = img.shape
    valid = np.zeros(img.shape, dtype=bool)
    if h > 2 * half and w > 2 * half:
        valid[half : h - half, half : w - half] = True
    return np.where(valid, norm, 0.0)


def rootsift(d: np.ndarray) -> np.ndarray:
    """ℓ1-normalize then take square roots; all-zero rows stay zero."""
    d = np.asarray(d, dtype=np.float64)
    l1 = np.sum(np.abs(d), axis=-1, keepdims=True)
    safe = np.where(l1 > 0, l1, 1.0)
    return np.sqrt(np.abs(d) / safe)


def l2_normalize_rows(d: np.ndarray) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    n = np.linalg.norm(d, axis=-1, keepdims=True)
    return d / np.where(n > 0, n, 1.0)


def l2_filter_mask(descs: np.ndarray, threshold: float = L2_FILTER_T) -> np.ndarray:
    """Rows whose squared ℓ2 norm is at least ``threshold``."""
    descs = np.atleast_2d(np.asarray(descs, dtype=np.float64))
    return np.sum(descs * descs, axis=1) >= threshold


def l2_filter(descs: np.ndarray, threshold: float = L2_FILTER_T) -> np.ndarray:
    descs = np.atleast_2d(np.asarray(descs, dtype=np.float64))
    return descs[l2_filter_mask(descs, threshold)]


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    rotation: np.ndarray  # columns are principal axes, by descending variance


def pca_train(descs: np.ndarray, min_samples: int = 256) -> PcaModel:
    x = np.asarray(descs, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < min_samples:
        raise ValueError(f"PCA needs at least {min_samples} samples, got {x.shape[0] if x.ndim == 2 else 0}")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / x.shape[0]
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(-evals, kind="stable")
    evecs = evecs[:, order]
    pivots = np.argmax(np.abs(evecs), axis=0)
    signs = np.sign(evecs[pivots, np.arange(evecs.shape[1])])
    signs[signs == 0] = 1.0
    return PcaModel(mean=mean, rotation=evecs * signs)


def pca_rotate(model: PcaModel, d: np.ndarray) -> np.ndarray:
    return (np.asarray(d, dtype=np.float64) - model.mean) @ model.rotation


def pca_apply(model: PcaModel, d: np.ndarray) -> np.ndarray:
    """Centre, rotate onto the principal axes, then ℓ2-normalize."""
    return l2_normalize_rows(pca_rotate(model, d))


@dataclass
class DescriptorSet:
    """Descriptors of one image with their keypoints and processing state."""

    values: np.ndarray
    keypoints: list[Keypoint] = field(default_factory=list)
    state: str = "raw"

    def __len__(self) -> int:
        return self.values.shape[0]

    def filtered(self, threshold: float = L2_FILTER_T) -> "DescriptorSet":
        if self.state != "raw":
            raise ValueError("norm filtering applies to raw descriptors only")
        mask = l2_filter_mask(self.values, threshold) if len(self) else np.zeros(0, dtype=bool)
        kps = [k for k, m in zip(self.keypoints, mask) if m] if self.keypoints else []
        return DescriptorSet(self.values[mask], kps, "raw")

    def to_rootsift(self) -> "DescriptorSet":
        if self.state != "raw":
            raise ValueError(f"RootSIFT expects raw descriptors, state is {self.state!r}")
        return DescriptorSet(rootsift(self.values), self.keypoints, "rootsift")

    def to_pca(self, model: PcaModel) -> "DescriptorSet":
        if self.state != "rootsift":
            raise ValueError(f"PCA expects RootSIFT descriptors, state is {self.state!r}")
        return DescriptorSet(pca_apply(model, self.values), self.keypoints, "pca")


def describe(img: np.ndarray, kps: Sequence[Keypoint], p: int = DEFAULT_PATCH, stack: ScaleStack | None = None) -> DescriptorSet:
    """Raw SIFT for every keypoint whose measurement region fits in the image."""
    patches, kept = extract_patches(img, kps, p, stack)
    values = sift_batch(patches) if kept.size else np.zeros((0, DIM))
    return DescriptorSet(values, [kps[i] for i in kept.tolist()], "raw")
