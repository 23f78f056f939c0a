"""Keypoint record and its text serialization."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

KP_HEADER = "densefeat-kp 1"
POLARITIES = ("max", "min", "none")


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    sigma: float
    response: float
    scale_index: int
    detector_id: str
    polarity: str = "none"

    @property
    def base_detector(self) -> str:
        # zernike keypoints carry their filter as "zernike:n:l"
        return self.detector_id.split(":", 1)[0]


def sort_keypoints(kps: Iterable[Keypoint]) -> list[Keypoint]:
    """Deterministic order: scale index, then row, then column."""
    return sorted(kps, key=lambda k: (k.scale_index, k.y, k.x))


def keypoints_from_arrays(xs, ys, sigma, responses, scale_index: int, detector_id: str, polarity: str) -> list[Keypoint]:
    sig = np.broadcast_to(np.asarray(sigma, dtype=np.float64), np.shape(xs))
    return [
        Keypoint(float(x), float(y), float(s), float(r), int(scale_index), detector_id, polarity)
        for x, y, s, r in zip(np.asarray(xs).tolist(), np.asarray(ys).tolist(), sig.tolist(), np.asarray(responses).tolist())
    ]


def format_keypoints(kps: Iterable[Keypoint]) -> str:
    kps = list(kps)
    lines = [KP_HEADER, str(len(kps))]
    for k in kps:
        lines.append(
            f"{k.x:.6f} {k.y:.6f} {k.sigma:.6f} {k.response:.6f} {k.scale_index:d} {k.detector_id} {k.polarity}"
        )
    return "\n".join(lines) + "\n"


def write_keypoints(path: str | Path, kps: Iterable[Keypoint]) -> None:
    Path(path).write_text(format_keypoints(kps), encoding="utf-8")


def parse_keypoints(text: str) -> list[Keypoint]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != KP_HEADER:
        raise ValueError(f"missing keypoint header {KP_HEADER!r}")
    try:
        count = int(lines[1])
    except (IndexError, ValueError) as exc:
        raise ValueError("missing keypoint count line") from exc
    body = lines[2:]
    if len(body) != count:
        raise ValueError(f"keypoint count says {count}, file has {len(body)} records")
    out = []
    for lineno, ln in enumerate(body, start=3):
        parts = ln.split()
        if len(parts) != 7:
            raise ValueError(f"line {lineno}: expected 7 fields, got {len(parts)}")
        x, y, s, r = (float(v) for v in parts[:4])
        if parts[6] not in POLARITIES:
            raise ValueError(f"line {lineno}: bad polarity {parts[6]!r}")
        out.append(Keypoint(x, y, s, r, int(parts[4]), parts[5], parts[6]))
    return out


def read_keypoints(path: str | Path) -> list[Keypoint]:
    return parse_keypoints(Path(path).read_text(encoding="utf-8"))
