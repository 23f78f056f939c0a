"""Visual codebook training and VLAD aggregation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_K = 256
DEFAULT_BETA = 0.5


@dataclass(frozen=True)
class Codebook:
    centroids: np.ndarray
    seed: int = 0
    objective_history: tuple[float, ...] = field(default=(), compare=False)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


def sq_distances(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    d = np.sum(x * x, axis=1)[:, None] - 2.0 * (x @ c.T) + np.sum(c * c, axis=1)[None, :]
    return np.maximum(d, 0.0)


def assign(x: np.ndarray, centroids: np.ndarray, chunk: int = 8192) -> np.ndarray:
    """Nearest centroid per row; ties go to the lowest index."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty(x.shape[0], dtype=np.int64)
    for s in range(0, x.shape[0], chunk):
        out[s : s + chunk] = np.argmin(sq_distances(x[s : s + chunk], centroids), axis=1)
    return out


def _kmeanspp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    idx = [int(rng.integers(n))]
    d2 = sq_distances(x, x[idx[0]][None])[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            # all remaining points coincide with chosen centres
            rest = np.setdiff1d(np.arange(n), idx)
            j = int(rest[0]) if rest.size else idx[-1]
        else:
            j = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            j = min(j, n - 1)
        idx.append(j)
        d2 = np.minimum(d2, sq_distances(x, x[j][None])[:, 0])
    return x[idx].copy()


def kmeans_train(descs: np.ndarray, k: int = DEFAULT_K, seed: int = 0, max_iters: int = 25) -> Codebook:
    """Seeded k-means++ followed by Lloyd iterations until the assignment
    stops changing or ``max_iters`` is reached.  Empty clusters are moved to
    the point farthest from its centroid."""
    x = np.asarray(descs, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < k:
        raise ValueError(f"k-means needs at least k={k} samples, got {x.shape[0] if x.ndim == 2 else 0}")
    rng = np.random.default_rng(seed)
    cent = _kmeanspp(x, k, rng)
    labels = assign(x, cent)
    history = [objective(x, cent, labels)]
    for _ in range(max_iters):
        new = np.zeros_like(cent)
        np.add.at(new, labels, x)
        counts = np.bincount(labels, minlength=k)
        nz = counts > 0
        new[nz] /= counts[nz, None]
        new[~nz] = cent[~nz]
        d = np.sum((x - new[labels]) ** 2, axis=1)
        for j in np.flatnonzero(~nz).tolist():
            far = int(np.argmax(d))
            new[j] = x[far]
            d[far] = 0.0
        cent = new
        new_labels = assign(x, cent)
        history.append(objective(x, cent, new_labels))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return Codebook(cent, seed, tuple(history))


def objective(x: np.ndarray, centroids: np.ndarray, labels: np.ndarray) -> float:
    return float(np.sum((x - centroids[labels]) ** 2))


def vlad_encode(descs: np.ndarray, cb: Codebook) -> np.ndarray:
    """Concatenated per-word sums of residuals to the nearest centroid."""
    c = cb.centroids
    out = np.zeros_like(c)
    descs = np.asarray(descs, dtype=np.float64)
    if descs.size == 0:
        return out.ravel()
    if descs.ndim != 2 or descs.shape[1] != cb.dim:
        raise ValueError(f"descriptor dimension {descs.shape[-1]} does not match codebook {cb.dim}")
    labels = assign(descs, c)
    order = np.argsort(labels, kind="stable")
    np.add.at(out, labels[order], descs[order] - c[labels[order]])
    return out.ravel()


def power_law(v: np.ndarray, beta: float = DEFAULT_BETA) -> np.ndarray:
    if not 0 < beta <= 1:
        raise ValueError("beta must be in (0, 1]")
    v = np.asarray(v, dtype=np.float64)
    return np.sign(v) * np.abs(v) ** beta


def l2_normalize(v: np.ndarray) -> tuple[np.ndarray, bool]:
    """Unit-norm copy of ``v`` and whether it was the zero vector."""
    v = np.asarray(v, dtype=np.float64)
    n = float(np.linalg.norm(v))
    if n == 0.0:
        return v.copy(), True
    return v / n, False


def encode_image(descs: np.ndarray, cb: Codebook, beta: float = DEFAULT_BETA) -> np.ndarray:
    v, _ = l2_normalize(power_law(vlad_encode(descs, cb), beta))
    return v
