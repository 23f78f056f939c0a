"""Little-endian binary containers: RMAP/EMAP rasters, DSC1 descriptors,
CBK1 codebooks, PCA1 rotation models and 16-bit PGM label maps."""

from __future__ import annotations

import re
import struct
from pathlib import Path

import numpy as np


class FormatError(ValueError):
    """Malformed file; the message names the byte offset of the problem."""

    def __init__(self, path, offset: int, what: str):
        super().__init__(f"{path}: {what} at byte offset {offset}")
        self.offset = offset


def _need(buf: bytes, offset: int, n: int, path, what: str) -> None:
    if len(buf) < offset + n:
        raise FormatError(path, len(buf), f"truncated file while reading {what} (need {n} bytes from offset {offset})")


def _no_trailing(buf: bytes, end: int, path) -> None:
    if len(buf) != end:
        raise FormatError(path, end, "trailing bytes after payload")


def write_raster(path: str | Path, magic: bytes, values: np.ndarray) -> None:
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValueError("raster must be 2-D")
    h, w = values.shape
    payload = np.ascontiguousarray(values, dtype="<f4").tobytes()
    Path(path).write_bytes(magic + struct.pack("<II", w, h) + payload)


def read_raster(path: str | Path, magic: bytes, *, nonnegative: bool = False) -> np.ndarray:
    buf = Path(path).read_bytes()
    _need(buf, 0, 4, path, "magic")
    if buf[:4] != magic:
        raise FormatError(path, 0, f"bad magic {buf[:4]!r}, expected {magic!r}")
    _need(buf, 4, 8, path, "dimensions")
    w, h = struct.unpack_from("<II", buf, 4)
    if w < 1 or h < 1:
        raise FormatError(path, 4, f"invalid dimensions {w}x{h}")
    n = w * h
    _need(buf, 12, 4 * n, path, "raster values")
    _no_trailing(buf, 12 + 4 * n, path)
    vals = np.frombuffer(buf, dtype="<f4", count=n, offset=12)
    bad = ~np.isfinite(vals)
    if nonnegative:
        bad |= vals < 0
    if bad.any():
        i = int(np.argmax(bad))
        raise FormatError(path, 12 + 4 * i, f"invalid value {vals[i]!r}")
    return vals.astype(np.float64).reshape(h, w)


def write_rmap(path, values) -> None:
    write_raster(path, b"RMAP", values)


def read_rmap(path) -> np.ndarray:
    return read_raster(path, b"RMAP")


def write_descriptors(path: str | Path, descs: np.ndarray) -> None:
    descs = np.atleast_2d(np.asarray(descs, dtype=np.float64))
    if descs.size == 0:
        descs = descs.reshape(0, descs.shape[-1] if descs.ndim == 2 else 128)
    count, dim = descs.shape
    Path(path).write_bytes(b"DSC1" + struct.pack("<II", count, dim) + np.ascontiguousarray(descs, dtype="<f4").tobytes())


def read_descriptors(path: str | Path) -> np.ndarray:
    buf = Path(path).read_bytes()
    _need(buf, 0, 12, path, "header")
    if buf[:4] != b"DSC1":
        raise FormatError(path, 0, f"bad magic {buf[:4]!r}, expected b'DSC1'")
    count, dim = struct.unpack_from("<II", buf, 4)
    _need(buf, 12, 4 * count * dim, path, "descriptor values")
    _no_trailing(buf, 12 + 4 * count * dim, path)
    vals = np.frombuffer(buf, dtype="<f4", count=count * dim, offset=12)
    if not np.all(np.isfinite(vals)):
        i = int(np.argmax(~np.isfinite(vals)))
        raise FormatError(path, 12 + 4 * i, "non-finite descriptor value")
    return vals.astype(np.float64).reshape(count, dim)


def write_codebook(path: str | Path, centroids: np.ndarray, seed: int) -> None:
    c = np.asarray(centroids)
    k, d = c.shape
    Path(path).write_bytes(b"CBK1" + struct.pack("<IIQ", k, d, seed) + np.ascontiguousarray(c, dtype="<f4").tobytes())


def read_codebook(path: str | Path) -> tuple[np.ndarray, int]:
    buf = Path(path).read_bytes()
    _need(buf, 0, 20, path, "header")
    if buf[:4] != b"CBK1":
        raise FormatError(path, 0, f"bad magic {buf[:4]!r}, expected b'CBK1'")
    k, d, seed = struct.unpack_from("<IIQ", buf, 4)
    if k < 1 or d < 1:
        raise FormatError(path, 4, f"invalid codebook shape {k}x{d}")
    _need(buf, 20, 4 * k * d, path, "centroids")
    _no_trailing(buf, 20 + 4 * k * d, path)
    vals = np.frombuffer(buf, dtype="<f4", count=k * d, offset=20)
    if not np.all(np.isfinite(vals)):
        i = int(np.argmax(~np.isfinite(vals)))
        raise FormatError(path, 20 + 4 * i, "non-finite centroid value")
    return vals.astype(np.float64).reshape(k, d), seed


def write_pca(path: str | Path, mean: np.ndarray, rotation: np.ndarray) -> None:
    d = mean.shape[0]
    Path(path).write_bytes(
        b"PCA1" + struct.pack("<I", d) + np.asarray(mean, dtype="<f8").tobytes() + np.ascontiguousarray(rotation, dtype="<f8").tobytes()
    )


def read_pca(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    buf = Path(path).read_bytes()
    _need(buf, 0, 8, path, "header")
    if buf[:4] != b"PCA1":
        raise FormatError(path, 0, f"bad magic {buf[:4]!r}, expected b'PCA1'")
    (d,) = struct.unpack_from("<I", buf, 4)
    _need(buf, 8, 8 * (d + d * d), path, "model values")
    _no_trailing(buf, 8 + 8 * (d + d * d), path)
    mean = np.frombuffer(buf, dtype="<f8", count=d, offset=8).copy()
    rot = np.frombuffer(buf, dtype="<f8", count=d * d, offset=8 + 8 * d).reshape(d, d).copy()
    return mean, rot


def write_pgm16(path: str | Path, labels: np.ndarray) -> None:
    labels = np.asarray(labels)
    if labels.min(initial=0) < 0 or labels.max(initial=0) > 65535:
        raise ValueError("labels must fit in 16 bits")
    h, w = labels.shape
    header = f"P5\n{w} {h}\n65535\n".encode("ascii")
    Path(path).write_bytes(header + labels.astype(">u2").tobytes())


def read_pgm16(path: str | Path) -> np.ndarray:
    buf = Path(path).read_bytes()
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+65535\s", buf)
    if m is None:
        raise FormatError(path, 0, "not a 16-bit binary PGM")
    w, h = int(m.group(1)), int(m.group(2))
    start = m.end()
    if len(buf) < start + 2 * w * h:
        raise FormatError(path, len(buf), "truncated PGM data")
    return np.frombuffer(buf, dtype=">u2", count=w * h, offset=start).reshape(h, w).astype(np.int64)
