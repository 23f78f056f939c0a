"""Independent brute-force reference implementations used by several test files."""

from collections import deque

import numpy as np


def components_4(mask):
    """4-connected components of a boolean mask as (list of frozensets,
    pixel -> component index).  Components are numbered in raster order of
    their first pixel."""
    h, w = mask.shape
    owner = -np.ones((h, w), dtype=np.int64)
    comps = []
    for y in range(h):
        for x in range(w):
            if not mask[y, x] or owner[y, x] >= 0:
                continue
            idx = len(comps)
            owner[y, x] = idx
            seen = [(y, x)]
            queue = deque([(y, x)])
            while queue:
                cy, cx = queue.popleft()
                for ny, nx in ((cy - 1, cx), (cy + 1, cx), (cy, cx - 1), (cy, cx + 1)):
                    if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and owner[ny, nx] < 0:
                        owner[ny, nx] = idx
                        seen.append((ny, nx))
                        queue.append((ny, nx))
            comps.append(frozenset(seen))
    return comps, owner


def mser_oracle(q, delta, min_area, max_area_px, max_variation):
    """Maximally stable extremal regions of ``q <= t`` by an exhaustive sweep
    over every threshold t in 0..255.

    Returns {pixel set (as (y, x) pairs): (level, stability)} where level is
    the first threshold at which the set qualifies.
    """
    top = 255
    present = set(np.unique(q).tolist())
    comps, owner = [], []
    for t in range(top + 1):
        if t == 0 or t in present:
            c, o = components_4(q <= t)
        comps.append(c)
        owner.append(o)

    def parent(t, c):
        y, x = next(iter(comps[t][c]))
        return int(owner[t + 1][y, x])

    def largest_child(t, c):
        if t == 0:
            return None
        if comps[t] is comps[t - 1]:
            return c
        best = None
        for j, cand in enumerate(comps[t - 1]):
            y, x = next(iter(cand))
            if owner[t][y, x] == c and (best is None or len(cand) > len(comps[t - 1][best])):
                best = j
        return best

    stab = []
    for t in range(top + 1):
        row = []
        for c, comp in enumerate(comps[t]):
            u, cu = t, c
            while u < min(t + delta, top):
                cu = parent(u, cu)
                u += 1
            area_up = len(comps[u][cu])
            if t - delta < 0:
                area_down = 0
            else:
                cd, s = c, t
                while s > t - delta and cd is not None:
                    cd = largest_child(s, cd)
                    s -= 1
                area_down = 0 if cd is None else len(comps[t - delta][cd])
            row.append((area_up - area_down) / len(comp))
        stab.append(row)

    found = {}
    for t in range(top + 1):
        for c, comp in enumerate(comps[t]):
            v = stab[t][c]
            vp = stab[t + 1][parent(t, c)] if t < top else np.inf
            ch = largest_child(t, c)
            vc = stab[t - 1][ch] if ch is not None else np.inf
            if v <= vp and v <= vc and min_area <= len(comp) <= max_area_px and v <= max_variation:
                found.setdefault(comp, (t, v))
    return found


def precision_curve_ap(ranked, relevant):
    """AP from the full precision curve: precision at each rank where a
    relevant item appears, summed and divided by the number of relevant items."""
    relevant = set(relevant)
    if not relevant:
        return None
    flags = np.array([r in relevant for r in ranked], dtype=np.float64)
    if flags.size == 0:
        return 0.0
    precision = np.cumsum(flags) / np.arange(1, flags.size + 1)
    return float(np.sum(precision * flags) / len(relevant))
