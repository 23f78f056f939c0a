"""Configuration and the per-image detect → describe → encode chain."""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .core import DEFAULT_TARGET_AREA, build_scale_stack, downsample_to_area, load_image
from .dense import DenseIpParams, DenseParams, L2NormParams, detect_dense_grid, detect_dense_ip, detect_dense_l2norm
from .descriptor import DEFAULT_PATCH, DescriptorSet, PcaModel, describe
from .encoding import DEFAULT_BETA, DEFAULT_K, Codebook, encode_image
from .interest import DogParams, HarrisParams, HessianParams, detect_dog, detect_harris_laplace, detect_hessian
from .keypoints import Keypoint
from .region import (
    MserParams,
    SegParams,
    detect_fast_edge,
    detect_mser_edge,
    detect_mser_keypoints,
    detect_ssr,
    detect_ssr_edge,
    load_edge_map,
)
from .zernike import build_filter_bank, detect_zernike


class ConfigError(ValueError):
    """Invalid configuration (CLI exit code 3)."""


class InputError(ValueError):
    """Unreadable or malformed input data (CLI exit code 2)."""


@dataclass(frozen=True)
class PipelineParams:
    patch_size: int = DEFAULT_PATCH
    target_area: int = DEFAULT_TARGET_AREA
    l2_filter: float = 0.0
    k: int = DEFAULT_K
    seed: int = 0
    beta: float = DEFAULT_BETA
    pca: bool = True
    train_manifest: str = ""
    codebook: str = ""
    max_train_descriptors: int = 100_000
    edge_dir: str = ""
    # levels kept for reading large measurement regions
    describe_levels: int = 8


@dataclass(frozen=True)
class HarrisSection:
    sigma_d: float = 1.0
    sigma_i: float = 1.0 / 0.7
    alpha: float = 0.05
    tau: float = 0.0


@dataclass(frozen=True)
class ZernikeSection:
    max_order: int = 2
    n_z: int = 10_000
    n_scales: int = 5
    filter_size: int = 11


@dataclass(frozen=True)
class EdgeSection:
    tau: float = 0.0
    n_scales: int = 5


SECTIONS: dict[str, type] = {
    "pipeline": PipelineParams,
    "dense": DenseParams,
    "dense_ip": DenseIpParams,
    "dense_l2": L2NormParams,
    "harris": HarrisSection,
    "hessian": HessianParams,
    "dog": DogParams,
    "zernike": ZernikeSection,
    "mser": MserParams,
    "seg": SegParams,
    "edge": EdgeSection,
}


@dataclass(frozen=True)
class Config:
    detector: str = "dense"
    sections: dict = field(default_factory=lambda: {name: cls() for name, cls in SECTIONS.items()})

    def __getitem__(self, name: str):
        return self.sections[name]

    @property
    def pipeline(self) -> PipelineParams:
        return self.sections["pipeline"]

    def with_value(self, section: str, key: str, value) -> "Config":
        return parse_config_dict({**self.as_dict(), section: {**self.as_dict().get(section, {}), key: value}}, self.detector)

    def as_dict(self) -> dict[str, dict[str, str]]:
        return {
            name: {f.name: _fmt(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
            for name, obj in self.sections.items()
        }


def _fmt(v) -> str:
    if v is None:
        return "none"
    return str(v).lower() if isinstance(v, bool) else str(v)


def _coerce(cls, name: str, raw: str):
    f = {f.name: f for f in dataclasses.fields(cls)}[name]
    text = str(raw).strip()
    typ = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    try:
        if "bool" in typ:
            low = text.lower()
            if low not in ("true", "false", "yes", "no", "1", "0", "on", "off"):
                raise ValueError(text)
            return low in ("true", "yes", "1", "on")
        if "None" in typ and text.lower() in ("none", ""):
            return None
        if "int" in typ:
            return int(text)
        if "float" in typ:
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {cls.__name__}.{name}") from None


def parse_config_dict(data: dict[str, dict[str, str]], detector: str | None = None) -> Config:
    sections = {}
    for name, cls in SECTIONS.items():
        given = dict(data.get(name, {}))
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(given) - known
        if unknown:
            raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(sorted(unknown))}")
        kwargs = {k: _coerce(cls, k, v) for k, v in given.items()}
        try:
            sections[name] = cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{name}]: {exc}") from None
    extra = set(data) - set(SECTIONS) - {"detector", "sweep"}
    if extra:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(extra))}")
    det = detector or data.get("detector", {}).get("name", "dense")
    if det not in DETECTORS:
        raise ConfigError(f"unknown detector {det!r}; choose from {', '.join(DETECTORS)}")
    return Config(detector=det, sections=sections)


def read_config_sections(path: str | Path | None) -> dict[str, dict[str, str]]:
    if path is None:
        return {}
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return {s: dict(parser.items(s)) for s in parser.sections()}


PATH_KEYS = ("train_manifest", "codebook", "edge_dir")


def resolve_paths(data: dict[str, dict[str, str]], base: Path) -> dict[str, dict[str, str]]:
    """Make relative path-valued pipeline keys relative to ``base``."""
    pipe = dict(data.get("pipeline", {}))
    for key in PATH_KEYS:
        val = pipe.get(key, "").strip()
        if val and not Path(val).is_absolute():
            pipe[key] = str(base / val)
    return {**data, "pipeline": pipe} if pipe else data


def load_config(path: str | Path | None = None, detector: str | None = None) -> Config:
    data = read_config_sections(path)
    data.pop("sweep", None)
    if path is not None:
        data = resolve_paths(data, Path(path).parent)
    return parse_config_dict(data, detector)


def _harris(cfg: Config, frob: bool, relaxed: bool):
    h = cfg["harris"]
    try:
        p = HarrisParams(h.sigma_d, h.sigma_i, h.alpha, h.tau, use_frobenius=frob, relaxed=relaxed)
    except ValueError as exc:
        raise ConfigError(f"[harris]: {exc}") from None
    return lambda img, ctx: detect_harris_laplace(img, p)


def _fast_edge(img, ctx):
    cfg, path = ctx
    edir = cfg.pipeline.edge_dir
    if not edir:
        raise ConfigError("fast_edge needs [pipeline] edge_dir with precomputed .emap files")
    if path is None:
        raise InputError("fast_edge needs the image path to locate its edge map")
    emap = Path(edir) / (Path(path).stem + ".emap")
    if not emap.exists():
        raise InputError(f"missing edge map {emap}")
    strength = load_edge_map(emap)
    if strength.shape != img.shape:
        raise InputError(f"edge map {emap} is {strength.shape}, image is {img.shape}")
    e = cfg["edge"]
    return detect_fast_edge(strength, e.tau, e.n_scales)


def _zernike(img, ctx):
    z = ctx[0]["zernike"]
    bank = build_filter_bank(z.max_order, z.filter_size)
    return detect_zernike(img, bank, z.n_z, z.n_scales)


DETECTORS: dict[str, Callable[[Config], Callable]] = {
    "dense": lambda cfg: lambda img, ctx: detect_dense_grid(img, cfg["dense"]),
    "dense_ip": lambda cfg: lambda img, ctx: detect_dense_ip(img, cfg["dense_ip"]),
    "dense_l2": lambda cfg: lambda img, ctx: detect_dense_l2norm(
        img, dataclasses.replace(cfg["dense_l2"], patch_size=cfg.pipeline.patch_size)
    ),
    "harris": lambda cfg: _harris(cfg, False, False),
    "frobenius": lambda cfg: _harris(cfg, True, False),
    "relaxed_harris": lambda cfg: _harris(cfg, False, True),
    "relaxed_frobenius": lambda cfg: _harris(cfg, True, True),
    "hessian": lambda cfg: lambda img, ctx: detect_hessian(img, cfg["hessian"]),
    "dog": lambda cfg: lambda img, ctx: detect_dog(img, cfg["dog"]),
    "zernike": lambda cfg: _zernike,
    "mser": lambda cfg: lambda img, ctx: detect_mser_keypoints(img, cfg["mser"]),
    "mser_edge": lambda cfg: lambda img, ctx: detect_mser_edge(img, cfg["mser"], cfg["edge"].tau, cfg["edge"].n_scales),
    "ssr": lambda cfg: lambda img, ctx: detect_ssr(img, cfg["seg"]),
    "ssr_edge": lambda cfg: lambda img, ctx: detect_ssr_edge(img, cfg["seg"], cfg["edge"].tau, cfg["edge"].n_scales),
    "fast_edge": lambda cfg: _fast_edge,
}


def prepare_image(path: str | Path, cfg: Config) -> np.ndarray:
    try:
        img = load_image(path)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read image {path}: {exc}") from None
    area = cfg.pipeline.target_area
    return downsample_to_area(img, area) if area > 0 else img


def detect(img: np.ndarray, cfg: Config, image_path: str | Path | None = None) -> list[Keypoint]:
    return DETECTORS[cfg.detector](cfg)(img, (cfg, image_path))


def describe_image(img: np.ndarray, kps: list[Keypoint], cfg: Config) -> DescriptorSet:
    stack = build_scale_stack(img, cfg.pipeline.describe_levels)
    ds = describe(img, kps, cfg.pipeline.patch_size, stack)
    if cfg.pipeline.l2_filter > 0:
        ds = ds.filtered(cfg.pipeline.l2_filter)
    return ds


def image_descriptors(path: str | Path, cfg: Config) -> DescriptorSet:
    img = prepare_image(path, cfg)
    return describe_image(img, detect(img, cfg, path), cfg)


def postprocess(ds: DescriptorSet, pca: PcaModel | None) -> np.ndarray:
    """RootSIFT, then the PCA rotation with ℓ2 normalization when a model is given."""
    rs = ds.to_rootsift()
    return rs.to_pca(pca).values if pca is not None else rs.values


def encode_descriptors(ds: DescriptorSet, cb: Codebook, pca: PcaModel | None, beta: float) -> np.ndarray:
    return encode_image(postprocess(ds, pca), cb, beta)
