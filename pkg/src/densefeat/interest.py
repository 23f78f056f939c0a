"""Scale-selecting interest point detectors: Harris-Laplace with its Frobenius
and relaxed-maxima variants, Hessian-Laplace and difference of Gaussians."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    NeighborhoodKind,
    check_image,
    extrema_mask,
    gaussian_blur,
    gradients,
    second_derivatives,
)
from .keypoints import Keypoint, sort_keypoints

# sigma_D ladder shared by Harris-Laplace and Hessian-Laplace
LADDER_BASE = 1.0
LADDER_RATIO = 1.4
LADDER_LEVELS = 7
# sigma_D = 0.7 * sigma_I
DIFF_TO_INT = 0.7


@dataclass(frozen=True)
class HarrisParams:
    sigma_d: float = 1.0
    sigma_i: float = 1.0 / DIFF_TO_INT
    alpha: float = 0.05
    tau: float = 0.0
    use_frobenius: bool = False
    relaxed: bool = False

    def __post_init__(self):
        if not (self.sigma_i > self.sigma_d > 0):
            raise ValueError("HarrisParams requires sigma_i > sigma_d > 0")
        if self.tau < 0:
            raise ValueError("tau must be >= 0")

    @property
    def detector_id(self) -> str:
        name = "frobenius" if self.use_frobenius else "harris"
        return f"relaxed_{name}" if self.relaxed else name


@dataclass(frozen=True)
class HessianParams:
    sigma_d: float = 1.0
    tau: float = 0.0

    def __post_init__(self):
        if self.sigma_d <= 0 or self.tau < 0:
            raise ValueError("HessianParams requires sigma_d > 0 and tau >= 0")


@dataclass(frozen=True)
class DogParams:
    scales_per_octave: int = 3
    n_octaves: int | None = None
    tau: float = 0.0
    sigma0: float = 1.6
    # blur already present in the input image
    input_sigma: float = 0.5

    def __post_init__(self):
        if self.scales_per_octave < 1 or self.tau < 0:
            raise ValueError("DogParams requires scales_per_octave >= 1 and tau >= 0")


def sigma_ladder(base: float = LADDER_BASE) -> list[float]:
    return [base * LADDER_RATIO**k for k in range(LADDER_LEVELS)]


def harris_matrix_response(img: np.ndarray, p: HarrisParams) -> np.ndarray:
    """Cornerness det(M) - alpha*trace(M)^2, or the Frobenius norm of M."""
    img = check_image(img)
    lx, ly = gradients(img, p.sigma_d)
    s2 = p.sigma_d**2
    m11 = s2 * gaussian_blur(lx * lx, p.sigma_i)
    m22 = s2 * gaussian_blur(ly * ly, p.sigma_i)
    m12 = s2 * gaussian_blur(lx * ly, p.sigma_i)
    if p.use_frobenius:
        return np.sqrt(m11 * m11 + 2.0 * m12 * m12 + m22 * m22)
    return (m11 * m22 - m12 * m12) - p.alpha * (m11 + m22) ** 2


def normalized_log(img: np.ndarray, sigma: float) -> np.ndarray:
    lxx, lyy, _ = second_derivatives(img, sigma)
    return sigma**2 * np.abs(lxx + lyy)


def _scale_selected(responses, logs, sigmas, kind, tau, detector_id) -> list[Keypoint]:
    """Spatial maxima of each response level kept where the normalized LoG
    peaks strictly across the neighbouring ladder levels."""
    kps: list[Keypoint] = []
    for k in range(1, len(sigmas) - 1):
        cand = extrema_mask(responses[k], kind, "max", tau)
        cand &= (logs[k] > logs[k - 1]) & (logs[k] > logs[k + 1])
        ys, xs = np.nonzero(cand)
        r = responses[k][ys, xs]
        kps.extend(
            Keypoint(float(x), float(y), sigmas[k], float(v), k, detector_id, "max")
            for x, y, v in zip(xs.tolist(), ys.tolist(), r.tolist())
        )
    return sort_keypoints(kps)


def detect_harris_laplace(img: np.ndarray, p: HarrisParams = HarrisParams()) -> list[Keypoint]:
    """Harris-Laplace and its three variants, chosen by ``p.use_frobenius`` and
    ``p.relaxed``.  The ladder starts at ``p.sigma_d``; ``p.sigma_i / p.sigma_d``
    is kept fixed along it.  Scale selection uses the normalized LoG at the
    differentiation scale, which is also the reported sigma; at the
    integration scale the LoG peak sits too far inside an L-corner for the
    corner's own Harris maximum to be selected."""
    img = check_image(img)
    ratio = p.sigma_i / p.sigma_d
    kind = NeighborhoodKind.RELAXED_2DIR if p.relaxed else NeighborhoodKind.STRICT_3X3
    sigmas = sigma_ladder(p.sigma_d)
    responses, logs = [], []
    for sd in sigmas:
        lp = HarrisParams(sd, sd * ratio, p.alpha, p.tau, p.use_frobenius, p.relaxed)
        responses.append(harris_matrix_response(img, lp))
        logs.append(normalized_log(img, sd))
    return _scale_selected(responses, logs, sigmas, kind, p.tau, p.detector_id)


def hessian_response(img: np.ndarray, sigma_d: float) -> np.ndarray:
    lxx, lyy, lxy = second_derivatives(check_image(img), sigma_d)
    return lxx * lyy - lxy * lxy


def detect_hessian(img: np.ndarray, p: HessianParams = HessianParams()) -> list[Keypoint]:
    """Hessian-Laplace with upright circular regions (no affine adaptation)."""
    img = check_image(img)
    sigmas = sigma_ladder(p.sigma_d)
    responses = [hessian_response(img, s) for s in sigmas]
    logs = [normalized_log(img, s) for s in sigmas]
    return _scale_selected(responses, logs, sigmas, NeighborhoodKind.STRICT_3X3, p.tau, "hessian")


def _cube_extrema(below: np.ndarray, mid: np.ndarray, above: np.ndarray, polarity: str) -> np.ndarray:
    sign = 1.0 if polarity == "max" else -1.0
    b, m, a = sign * below, sign * mid, sign * above
    c = m[1:-1, 1:-1]
    h, w = m.shape
    ok = np.ones(c.shape, dtype=bool)
    for layer, skip_centre in ((b, False), (m, True), (a, False)):
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if skip_centre and dy == 0 and dx == 0:
                    continue
                ok &= c > layer[1 + dy : h - 1 + dy, 1 + dx : w - 1 + dx]
    mask = np.zeros(m.shape, dtype=bool)
    mask[1:-1, 1:-1] = ok
    return mask


def detect_dog(img: np.ndarray, p: DogParams = DogParams()) -> list[Keypoint]:
    """DoG extrema of both polarities in 3x3x3 neighbourhoods, |D| >= tau.
    No edge or contrast rejection and no sub-pixel refinement."""
    img = check_image(img)
    s = p.scales_per_octave
    k = 2.0 ** (1.0 / s)
    sig = [p.sigma0 * k**i for i in range(s + 3)]
    base = gaussian_blur(img, math.sqrt(max(p.sigma0**2 - p.input_sigma**2, 1e-4)))
    kps: list[Keypoint] = []
    octave = 0
    while min(base.shape) >= 8 and (p.n_octaves is None or octave < p.n_octaves):
        gauss = [base]
        for i in range(1, s + 3):
            gauss.append(gaussian_blur(gauss[-1], math.sqrt(sig[i] ** 2 - sig[i - 1] ** 2)))
        # sign chosen so that bright blobs are maxima
        dogs = [gauss[i] - gauss[i + 1] for i in range(s + 2)]
        step = 2.0**octave
        for i in range(1, s + 1):
            for pol in ("max", "min"):
                mask = _cube_extrema(dogs[i - 1], dogs[i], dogs[i + 1], pol)
                mask &= np.abs(dogs[i]) >= p.tau
                ys, xs = np.nonzero(mask)
                vals = dogs[i][ys, xs]
                sigma = sig[i] * step
                kps.extend(
                    Keypoint(float(x * step), float(y * step), sigma, float(v), octave * s + (i - 1), "dog", pol)
                    for x, y, v in zip(xs.tolist(), ys.tolist(), vals.tolist())
                )
        base = gauss[s][::2, ::2]
        octave += 1
    return sort_keypoints(kps)
