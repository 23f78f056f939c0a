"""Region detectors (MSER, graph segmentation), ellipse fitting, and
sampling of patches along region borders or external edge maps."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .core import LEVEL_FACTOR, NeighborhoodKind, check_image, extrema_mask, gradients
from .formats import read_raster, write_raster
from .keypoints import Keypoint

DARK = "dark-on-bright"
BRIGHT = "bright-on-dark"
N_LEVELS = 256


@dataclass(frozen=True)
class MserParams:
    delta: int = 5
    min_area: int = 10
    # fraction of the image area when <= 1, otherwise a pixel count
    max_area: float = 0.25
    max_variation: float = 1.0

    def __post_init__(self):
        if self.delta < 1:
            raise ValueError("delta must be >= 1")
        if self.min_area < 1 or self.max_area <= 0:
            raise ValueError("area bounds must be positive")

    def max_pixels(self, n_pixels: int) -> float:
        return self.max_area * n_pixels if self.max_area <= 1 else self.max_area


@dataclass(frozen=True)
class SegParams:
    k: float = 50.0
    min_size: int = 20

    def __post_init__(self):
        if self.k <= 0 or self.min_size < 1:
            raise ValueError("SegParams requires k > 0 and min_size >= 1")


@dataclass(frozen=True)
class Region:
    xs: np.ndarray
    ys: np.ndarray
    polarity: str
    stability: float
    level: int

    @property
    def area(self) -> int:
        return int(self.xs.size)

    @property
    def pixels(self) -> frozenset:
        return frozenset(zip(self.xs.tolist(), self.ys.tolist()))


def quantize(img: np.ndarray) -> np.ndarray:
    return np.clip(np.round(check_image(img) * 255.0), 0, 255).astype(np.int64)


def _component_tree(q: np.ndarray):
    """Per threshold t: component areas, parent index at t+1 and largest
    child index at t-1 (-1 when none).  Components are numbered in raster
    order of their first pixel."""
    areas, parents, children = [], [], []
    prev_labels = None
    prev_n = 0
    present = np.zeros(N_LEVELS, dtype=bool)
    present[np.unique(q)] = True
    labels = np.zeros(q.shape, dtype=np.int32)
    n = 0
    for t in range(N_LEVELS):
        if t == 0 or present[t]:
            labels, n = ndimage.label(q <= t)
        area = np.bincount(labels.ravel(), minlength=n + 1)[1:]
        if prev_labels is not None:
            par = np.empty(prev_n, dtype=np.int64)
            m = prev_labels > 0
            par[prev_labels[m] - 1] = labels[m] - 1
            parents.append(par)
            child = np.full(n, -1, dtype=np.int64)
            if prev_n:
                ids = np.arange(prev_n)
                order = np.lexsort((ids, -areas[-1], par))
                first = np.ones(prev_n, dtype=bool)
                first[1:] = par[order[1:]] != par[order[:-1]]
                child[par[order[first]]] = order[first]
            children.append(child)
        else:
            children.append(np.full(n, -1, dtype=np.int64))
        areas.append(area)
        prev_labels, prev_n = labels, n
    parents.append(np.arange(prev_n, dtype=np.int64))  # top level is its own parent
    return areas, parents, children


def _gather(values: np.ndarray, idx: np.ndarray, fill) -> np.ndarray:
    """``values[idx]`` where ``idx >= 0``, ``fill`` elsewhere (``values`` may be empty)."""
    if values.size == 0:
        return np.full(idx.shape, fill, dtype=np.result_type(values, type(fill)))
    return np.where(idx >= 0, values[np.maximum(idx, 0)], fill)


def _stability(areas, parents, children, delta):
    top = N_LEVELS - 1
    qs = []
    for t in range(N_LEVELS):
        n = areas[t].size
        up = np.arange(n)
        for s in range(t, min(t + delta, top)):
            up = parents[s][up]
        area_up = areas[min(t + delta, top)][up]
        down = np.arange(n)
        for s in range(t, t - delta, -1):
            if s <= 0:
                down = np.full(n, -1)
                break
            down = _gather(children[s], down, -1)
        lo = t - delta
        area_down = _gather(areas[lo], down, 0) if lo >= 0 else np.zeros(n)
        qs.append((area_up - area_down) / areas[t])
    return qs


def _mser_one_polarity(q: np.ndarray, p: MserParams, polarity: str) -> list[Region]:
    areas, parents, children = _component_tree(q)
    qs = _stability(areas, parents, children, p.delta)
    max_px = p.max_pixels(q.size)
    found: dict[tuple[int, int], tuple[int, int, float]] = {}
    for t in range(N_LEVELS):
        n = areas[t].size
        if n == 0:
            continue
        qp = qs[t + 1][parents[t]] if t < N_LEVELS - 1 else np.full(n, np.inf)
        ch = children[t]
        qc = _gather(qs[t - 1], ch, np.inf) if t > 0 else np.full(n, np.inf)
        ok = (qs[t] <= qp) & (qs[t] <= qc)
        ok &= (areas[t] >= p.min_area) & (areas[t] <= max_px) & (qs[t] <= p.max_variation)
        for c in np.flatnonzero(ok).tolist():
            # identify the pixel set by the lowest threshold where it exists
            t0, c0 = t, c
            while t0 > 0 and children[t0][c0] >= 0 and areas[t0 - 1][children[t0][c0]] == areas[t0][c0]:
                c0 = int(children[t0][c0])
                t0 -= 1
            if (t0, c0) not in found:
                found[(t0, c0)] = (t, c, float(qs[t][c]))
    regions = []
    by_level: dict[int, list] = {}
    for (t0, c0), (t, c, qv) in found.items():
        by_level.setdefault(t0, []).append((c0, t, qv))
    for t0, items in by_level.items():
        labels, _ = ndimage.label(q <= t0)
        boxes = ndimage.find_objects(labels)
        for c0, t, qv in items:
            sy, sx = boxes[c0]
            ys, xs = np.nonzero(labels[sy, sx] == c0 + 1)
            regions.append(Region(xs + sx.start, ys + sy.start, polarity, qv, t))
    return regions


def region_sort_key(r: Region):
    i = int(np.argmin(r.ys * 1_000_000 + r.xs))
    return (r.level, r.area, int(r.ys[i]), int(r.xs[i]), r.polarity)


def detect_mser(img: np.ndarray, p: MserParams = MserParams()) -> list[Region]:
    """MSERs of both polarities.  The dark-on-bright regions come from
    thresholding the image, the bright-on-dark ones from its inverse; their
    ``level`` is the threshold in the respective quantized image."""
    q = quantize(img)
    regions = _mser_one_polarity(q, p, DARK) + _mser_one_polarity(255 - q, p, BRIGHT)
    return sorted(regions, key=region_sort_key)


@dataclass(frozen=True)
class Ellipse:
    cx: float
    cy: float
    major: float  # semi-axes
    minor: float
    angle: float  # radians, major axis direction from +x towards +y

    @property
    def sigma(self) -> float:
        return max(1.0, math.sqrt(self.major * self.minor))


def _ellipse_from_moments(cx, cy, sxx, syy, sxy, upright: bool) -> Ellipse:
    if upright:
        a, b = 2.0 * math.sqrt(max(sxx, 0.0)), 2.0 * math.sqrt(max(syy, 0.0))
        return Ellipse(cx, cy, max(a, b), min(a, b), 0.0 if a >= b else math.pi / 2)
    tr, det = sxx + syy, sxx * syy - sxy * sxy
    disc = math.sqrt(max(tr * tr / 4.0 - det, 0.0))
    l1, l2 = tr / 2.0 + disc, max(tr / 2.0 - disc, 0.0)
    angle = 0.5 * math.atan2(2.0 * sxy, sxx - syy)
    return Ellipse(cx, cy, 2.0 * math.sqrt(l1), 2.0 * math.sqrt(l2), angle)


def ellipse_params(region: Region, upright: bool = False) -> Ellipse:
    if region.area == 0:
        raise ValueError("empty region")
    x = region.xs.astype(np.float64)
    y = region.ys.astype(np.float64)
    cx, cy = x.mean(), y.mean()
    dx, dy = x - cx, y - cy
    return _ellipse_from_moments(cx, cy, np.mean(dx * dx), np.mean(dy * dy), np.mean(dx * dy), upright)


def fit_ellipse(region: Region, upright: bool = False, detector_id: str = "mser") -> Keypoint:
    """Keypoint at the region centroid; sigma is the geometric mean of the
    2-sigma semi-axes, at least 1."""
    e = ellipse_params(region, upright)
    pol = "min" if region.polarity == DARK else "max" if region.polarity == BRIGHT else "none"
    return Keypoint(e.cx, e.cy, e.sigma, region.stability, 0, detector_id, pol)


def segment_graph(img: np.ndarray, p: SegParams = SegParams()) -> np.ndarray:
    """Felzenszwalb-Huttenlocher segmentation on the 8-connected grid.

    Edge weights are absolute intensity differences in 8-bit units.  Labels
    are numbered 0.. in raster order of each segment's first pixel.
    """
    img = check_image(img)
    h, w = img.shape
    vals = img.ravel() * 255.0
    idx = np.arange(h * w).reshape(h, w)
    pairs = [
        (idx[:, :-1], idx[:, 1:]),
        (idx[:-1, :], idx[1:, :]),
        (idx[:-1, :-1], idx[1:, 1:]),
        (idx[1:, :-1], idx[:-1, 1:]),
    ]
    a = np.concatenate([u.ravel() for u, _ in pairs])
    b = np.concatenate([v.ravel() for _, v in pairs])
    wt = np.abs(vals[a] - vals[b])
    order = np.argsort(wt, kind="stable")
    a_l, b_l, w_l = a[order].tolist(), b[order].tolist(), wt[order].tolist()

    parent = list(range(h * w))
    size = [1] * (h * w)
    thresh = [p.k] * (h * w)

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    k = p.k
    for u, v, wgt in zip(a_l, b_l, w_l):
        ru, rv = find(u), find(v)
        if ru != rv and wgt <= thresh[ru] and wgt <= thresh[rv]:
            if size[ru] < size[rv]:
                ru, rv = rv, ru
            parent[rv] = ru
            size[ru] += size[rv]
            thresh[ru] = wgt + k / size[ru]
    for u, v in zip(a_l, b_l):
        ru, rv = find(u), find(v)
        if ru != rv and (size[ru] < p.min_size or size[rv] < p.min_size):
            if size[ru] < size[rv]:
                ru, rv = rv, ru
            parent[rv] = ru
            size[ru] += size[rv]
    roots = np.array([find(i) for i in range(h * w)])
    _, first, inv = np.unique(roots, return_index=True, return_inverse=True)
    rank = np.empty(first.size, dtype=np.int64)
    rank[np.argsort(first)] = np.arange(first.size)
    return rank[inv].reshape(h, w)


def label_edge_map(labels: np.ndarray) -> np.ndarray:
    """1 where a 4-neighbour carries a different label; the image frame is 0."""
    labels = np.asarray(labels)
    e = np.zeros(labels.shape, dtype=bool)
    e[:, :-1] |= labels[:, :-1] != labels[:, 1:]
    e[:, 1:] |= labels[:, 1:] != labels[:, :-1]
    e[:-1, :] |= labels[:-1, :] != labels[1:, :]
    e[1:, :] |= labels[1:, :] != labels[:-1, :]
    _clear_frame(e)
    return e.astype(np.float64)


def _clear_frame(e: np.ndarray) -> None:
    e[0, :] = e[-1, :] = False
    e[:, 0] = e[:, -1] = False


def regions_edge_map(regions, shape: tuple[int, int]) -> np.ndarray:
    """1 on region pixels that have a 4-neighbour outside the same region."""
    e = np.zeros(shape, dtype=bool)
    h, w = shape
    for r in regions:
        m = np.zeros((h + 2, w + 2), dtype=bool)
        m[r.ys + 1, r.xs + 1] = True
        inner = m[1:-1, 1:-1]
        border = inner & ~(m[:-2, 1:-1] & m[2:, 1:-1] & m[1:-1, :-2] & m[1:-1, 2:])
        e |= border
    _clear_frame(e)
    return e.astype(np.float64)


def regions_to_edge_map(regions_or_labels, shape: tuple[int, int] | None = None) -> np.ndarray:
    if isinstance(regions_or_labels, np.ndarray):
        return label_edge_map(regions_or_labels)
    if shape is None:
        raise ValueError("shape is required for a region list")
    return regions_edge_map(regions_or_labels, shape)


def gradient_magnitude(img: np.ndarray, sigma_d: float = 1.0) -> np.ndarray:
    lx, ly = gradients(img, sigma_d)
    return np.hypot(lx, ly)


def sample_edge_map(
    edges: np.ndarray,
    interest: np.ndarray,
    n_scales: int = 5,
    tau: float = 0.0,
    detector_id: str = "fast_edge",
) -> list[Keypoint]:
    """Strict 3x3 maxima of ``interest`` restricted to edge pixels, each
    emitted once per scale with sigma sqrt(2)^i."""
    edges = np.asarray(edges, dtype=np.float64)
    interest = np.asarray(interest, dtype=np.float64)
    if edges.shape != interest.shape:
        raise ValueError("edge map and interest map dimensions differ")
    restricted = np.where(edges > 0, interest, -np.inf)
    ys, xs = np.nonzero(extrema_mask(restricted, NeighborhoodKind.STRICT_3X3, "max", tau))
    vals = restricted[ys, xs]
    kps = []
    for i in range(n_scales):
        f = LEVEL_FACTOR**i
        kps.extend(
            Keypoint(float(x), float(y), f, float(v), i, detector_id, "max")
            for x, y, v in zip(xs.tolist(), ys.tolist(), vals.tolist())
        )
    return kps


def write_edge_map(path: str | Path, strength: np.ndarray) -> None:
    strength = np.asarray(strength, dtype=np.float64)
    if np.any(strength < 0) or not np.all(np.isfinite(strength)):
        raise ValueError("edge strengths must be finite and >= 0")
    write_raster(path, b"EMAP", strength)


def load_edge_map(path: str | Path) -> np.ndarray:
    return read_raster(path, b"EMAP", nonnegative=True)


def detect_mser_keypoints(img: np.ndarray, p: MserParams = MserParams()) -> list[Keypoint]:
    return [fit_ellipse(r, upright=False, detector_id="mser") for r in detect_mser(img, p)]


def detect_mser_edge(img: np.ndarray, p: MserParams = MserParams(), tau: float = 0.0, n_scales: int = 5) -> list[Keypoint]:
    img = check_image(img)
    edges = regions_edge_map(detect_mser(img, p), img.shape)
    return sample_edge_map(edges, gradient_magnitude(img), n_scales, tau, "mser_edge")


def segment_keypoints(labels: np.ndarray, detector_id: str = "ssr") -> list[Keypoint]:
    """Upright ellipse keypoint per segment, from per-label moments."""
    labels = np.asarray(labels)
    n = int(labels.max()) + 1
    ys, xs = np.indices(labels.shape)
    lab = labels.ravel()
    x, y = xs.ravel().astype(np.float64), ys.ravel().astype(np.float64)
    cnt = np.bincount(lab, minlength=n).astype(np.float64)
    mx = np.bincount(lab, x, n) / cnt
    my = np.bincount(lab, y, n) / cnt
    vx = np.bincount(lab, x * x, n) / cnt - mx * mx
    vy = np.bincount(lab, y * y, n) / cnt - my * my
    kps = []
    for i in range(n):
        e = _ellipse_from_moments(mx[i], my[i], vx[i], vy[i], 0.0, upright=True)
        kps.append(Keypoint(float(e.cx), float(e.cy), e.sigma, 0.0, 0, detector_id, "none"))
    return kps


def detect_ssr(img: np.ndarray, p: SegParams = SegParams()) -> list[Keypoint]:
    return segment_keypoints(segment_graph(img, p), "ssr")


def detect_ssr_edge(img: np.ndarray, p: SegParams = SegParams(), tau: float = 0.0, n_scales: int = 5) -> list[Keypoint]:
    img = check_image(img)
    edges = label_edge_map(segment_graph(img, p))
    return sample_edge_map(edges, gradient_magnitude(img), n_scales, tau, "ssr_edge")


def detect_fast_edge(edge_strength: np.ndarray, tau: float = 0.0, n_scales: int = 5) -> list[Keypoint]:
    """Edge-map sampling where the edge strength is also the interestingness."""
    s = np.asarray(edge_strength, dtype=np.float64)
    return sample_edge_map(s, s, n_scales, tau, "fast_edge")
