"""Pseudo-Zernike filter bank used as a dense detector.

Each complex polynomial ``R_nl(r) exp(i l theta)`` is split into two real
filters: the cosine part for ``l >= 0`` and the sine part for ``l < 0``.
That yields ``2n + 1`` filters per order.  Detection keeps the strongest
maxima and minima of every filter response, up to a fixed capacity shared
across filters, polarities and scales.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .core import NeighborhoodKind, build_scale_stack, check_image, extrema_mask, snap_to_zero
from .formats import write_rmap
from .keypoints import Keypoint

_FACTORIALS = [math.factorial(i) for i in range(18)]  # covers n <= 8


def _fact(i: int) -> int:
    return _FACTORIALS[i] if i < len(_FACTORIALS) else math.factorial(i)


def radial_poly(n: int, l: int, r):
    """Pseudo-Zernike radial polynomial R_nl evaluated at ``r`` (scalar or array)."""
    m = abs(l)
    if n < 0 or m > n:
        raise ValueError(f"invalid pseudo-Zernike indices n={n}, l={l}")
    r = np.asarray(r, dtype=np.float64)
    out = np.zeros_like(r)
    for s in range(n - m + 1):
        c = (-1) ** s * _fact(2 * n + 1 - s) // (_fact(s) * _fact(n - m - s) * _fact(n + m + 1 - s))
        out = out + c * r ** (n - s)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class ZernikeFilter:
    n: int
    l: int
    kernel: np.ndarray

    @property
    def name(self) -> str:
        return f"zernike:{self.n}:{self.l}"


@dataclass(frozen=True)
class FilterBank:
    filters: tuple[ZernikeFilter, ...]
    max_order: int
    filter_size: int

    def __len__(self) -> int:
        return len(self.filters)

    def __iter__(self):
        return iter(self.filters)


def filter_count(max_order: int) -> int:
    return sum(2 * n + 1 for n in range(1, max_order + 1))


def zernike_kernel(n: int, l: int, size: int) -> np.ndarray:
    half = (size - 1) / 2.0
    c = np.arange(size, dtype=np.float64) - half
    yy, xx = np.meshgrid(c, c, indexing="ij")
    r = np.hypot(xx, yy) / half
    theta = np.arctan2(yy, xx)
    m = abs(l)
    ang = np.cos(m * theta) if l >= 0 else np.sin(m * theta)
    k = np.where(r <= 1.0, radial_poly(n, m, np.minimum(r, 1.0)) * ang, 0.0)
    k = k - k.mean()
    return k / np.linalg.norm(k)


def build_filter_bank(max_order: int, filter_size: int = 11) -> FilterBank:
    if not 1 <= max_order <= 6:
        raise ValueError("max_order must be in [1, 6]")
    if filter_size < 5 or filter_size % 2 == 0:
        raise ValueError("filter_size must be odd and >= 5")
    filters = tuple(
        ZernikeFilter(n, l, zernike_kernel(n, l, filter_size))
        for n in range(1, max_order + 1)
        for l in range(-n, n + 1)
    )
    return FilterBank(filters, max_order, filter_size)


@dataclass(frozen=True)
class CapacityTable:
    """``budgets[f, p, s]``: keypoints allowed for filter f, polarity p
    (0 = maxima, 1 = minima) and scale s (0 = finest)."""

    budgets: np.ndarray
    n_z: int

    @property
    def total(self) -> int:
        return int(self.budgets.sum())

    def budget(self, f: int, polarity: int, scale: int) -> int:
        return int(self.budgets[f, polarity, scale])


def split_over_scales(units: int, n_scales: int) -> list[int]:
    """Share ``units`` over scales with weights 2^(n_scales-1-i).

    Units are handed out one at a time to the scale with the largest
    ``weight / (budget + 1)``, ties going to the finer scale.  This gives
    each scale at least its floored proportional share, puts the leftover
    on the finest scales, and never shrinks a budget when ``units`` grows.
    """
    weights = [2 ** (n_scales - 1 - i) for i in range(n_scales)]
    budgets = [0] * n_scales
    # closed-form start: with M = floor(units*w0/W) every scale gets floor(M / 2^i)
    total_w = sum(weights)
    m = (units * weights[0]) // total_w
    for i in range(n_scales):
        budgets[i] = m >> i
    left = units - sum(budgets)
    while left > 0:
        best = 0
        for i in range(1, n_scales):
            # w_i / (b_i + 1) > w_best / (b_best + 1), in integers
            if weights[i] * (budgets[best] + 1) > weights[best] * (budgets[i] + 1):
                best = i
        budgets[best] += 1
        left -= 1
    return budgets


def allocate_capacity(n_z: int, n_filters: int, n_scales: int) -> CapacityTable:
    if n_z < 1 or n_filters < 1 or n_scales < 1:
        raise ValueError("allocate_capacity inputs must be >= 1")
    per_polarity = (n_z // n_filters) // 2
    scales = split_over_scales(per_polarity, n_scales)
    budgets = np.broadcast_to(np.asarray(scales, dtype=np.int64), (n_filters, 2, n_scales)).copy()
    return CapacityTable(budgets, n_z)


def filter_response(img: np.ndarray, filt: ZernikeFilter) -> np.ndarray:
    # a zero-mean kernel on flat input leaves only rounding residue
    return snap_to_zero(ndimage.correlate(check_image(img), filt.kernel, mode="mirror"))


def _top(resp: np.ndarray, mask: np.ndarray, budget: int, descending: bool):
    """Indices of the ``budget`` strongest extrema, ties by row-major index."""
    flat = np.flatnonzero(mask)
    if budget <= 0 or flat.size == 0:
        return flat[:0]
    vals = resp.ravel()[flat]
    key = -vals if descending else vals
    order = np.argsort(key, kind="stable")
    return flat[order[:budget]]


def detect_zernike(img: np.ndarray, bank: FilterBank, n_z: int, n_scales: int = 5) -> list[Keypoint]:
    """Keypoints from the strongest per-filter extrema, at most ``n_z`` in total.

    Keypoint sigma is the level's linear downsampling factor; coordinates are
    in the original image frame.
    """
    stack = build_scale_stack(check_image(img), n_scales)
    table = allocate_capacity(n_z, len(bank), n_scales)
    kps: list[Keypoint] = []
    for fi, filt in enumerate(bank):
        for level, limg in enumerate(stack.levels):
            resp = filter_response(limg, filt)
            w = resp.shape[1]
            factor = stack.level_scale[level]
            for pi, pol in enumerate(("max", "min")):
                mask = extrema_mask(resp, NeighborhoodKind.STRICT_3X3, pol, 0.0)
                idx = _top(resp, mask, table.budget(fi, pi, level), descending=(pol == "max"))
                ys, xs = np.divmod(idx, w)
                vals = resp.ravel()[idx]
                kps.extend(
                    Keypoint(x * factor, y * factor, factor, v, level, filt.name, pol)
                    for x, y, v in zip(xs.tolist(), ys.tolist(), vals.tolist())
                )
    return kps


def export_filter_bank(bank: FilterBank, out_dir: str | Path) -> Path:
    """Write one RMAP raster per filter plus an ``index.txt`` of ``n l filename``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = []
    for f in bank:
        name = f"zernike_n{f.n}_l{f.l:+d}.rmap"
        write_rmap(out / name, f.kernel)
        lines.append(f"{f.n} {f.l} {name}")
    index = out / "index.txt"
    index.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return index
