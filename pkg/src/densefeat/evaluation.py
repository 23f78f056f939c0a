"""Retrieval evaluation: manifests, average precision, mAP and parameter sweeps."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .descriptor import DescriptorSet, PcaModel, pca_train
from .encoding import Codebook, kmeans_train
from .formats import FormatError, read_codebook, read_pca, write_codebook, write_pca
from .pipeline import (
    Config,
    ConfigError,
    InputError,
    encode_descriptors,
    image_descriptors,
    load_config,
    parse_config_dict,
    postprocess,
    read_config_sections,
    resolve_paths,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Manifest:
    paths: tuple[Path, ...]
    groups: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.paths)

    def query_indices(self) -> list[int]:
        """Index of the first listed image of each group, in listing order."""
        seen, out = set(), []
        for i, g in enumerate(self.groups):
            if g not in seen:
                seen.add(g)
                out.append(i)
        return out


def read_manifest(path: str | Path, require_groups: bool = True) -> Manifest:
    """Parse ``path<TAB>group`` lines; relative paths resolve against the
    manifest's directory.  Without ``require_groups`` a bare path is accepted
    and gets group 0."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read manifest {path}: {exc}") from None
    paths, groups = [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) == 1 and not require_groups:
            parts = [parts[0], "0"]
        if len(parts) != 2:
            raise InputError(f"{path}:{lineno}: expected 'path<TAB>group_id'")
        try:
            g = int(parts[1])
        except ValueError:
            raise InputError(f"{path}:{lineno}: group id {parts[1]!r} is not an integer") from None
        p = Path(parts[0])
        paths.append(p if p.is_absolute() else path.parent / p)
        groups.append(g)
    if not paths:
        raise InputError(f"manifest {path} lists no images")
    resolved = [p.resolve() for p in paths]
    if len(set(resolved)) != len(resolved):
        raise InputError(f"manifest {path} lists the same image twice")
    return Manifest(tuple(paths), tuple(groups))


def average_precision(ranked, relevant, query=None) -> float | None:
    """AP of a ranked list: mean over relevant items of precision at their
    rank, with missing relevant items counting 0.  Returns ``None`` when
    there is nothing relevant (the query is skipped)."""
    rel = set(relevant)
    rel.discard(query)
    if not rel:
        return None
    hits, total = 0, 0.0
    for rank, item in enumerate((r for r in ranked if r != query), 1):
        if item in rel:
            hits += 1
            total += hits / rank
    return total / len(rel)


def rank_database(sim: np.ndarray, q: int) -> list[int]:
    """Database indices by descending similarity to ``q`` (ties to the lower
    index), the query itself removed."""
    order = np.lexsort((np.arange(sim.shape[1]), -sim[q]))
    return [int(i) for i in order if i != q]


@dataclass
class EvalResult:
    mAP: float | None
    aps: list[tuple[int, float]]
    mean_n: float
    counts: list[int] = field(default_factory=list)
    skipped: list[int] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def undefined(self) -> bool:
        return self.mAP is None


def evaluate_vectors(vectors: np.ndarray, groups) -> tuple[float | None, list[tuple[int, float]], list[int]]:
    """mAP of a set of image vectors ranked by dot product."""
    v = np.asarray(vectors, dtype=np.float64)
    sim = v @ v.T
    groups = list(groups)
    m = Manifest(tuple(Path(str(i)) for i in range(len(groups))), tuple(groups))
    aps, skipped = [], []
    for q in m.query_indices():
        rel = {i for i, g in enumerate(groups) if g == groups[q] and i != q}
        ap = average_precision(rank_database(sim, q), rel, q)
        if ap is None:
            skipped.append(q)
        else:
            aps.append((q, ap))
    mAP = float(np.mean([a for _, a in aps])) if aps else None
    return mAP, aps, skipped


def load_codebook_bundle(path: str | Path) -> tuple[Codebook, PcaModel | None]:
    """Codebook plus the optional PCA sidecar stored next to it."""
    path = Path(path)
    try:
        cent, seed = read_codebook(path)
        pca_path = path.with_name(path.name + ".pca")
        pca = PcaModel(*read_pca(pca_path)) if pca_path.exists() else None
    except (OSError, FormatError) as exc:
        raise InputError(str(exc)) from None
    return Codebook(cent.astype(np.float64), seed), pca


def save_codebook_bundle(path: str | Path, cb: Codebook, pca: PcaModel | None) -> None:
    path = Path(path)
    write_codebook(path, cb.centroids, cb.seed)
    if pca is not None:
        write_pca(path.with_name(path.name + ".pca"), pca.mean, pca.rotation)


def train_codebook_bundle(
    descs: list[np.ndarray], cfg: Config, k: int | None = None, seed: int | None = None
) -> tuple[Codebook, PcaModel | None]:
    """Sample raw descriptors, apply RootSIFT (and PCA when enabled) and run
    k-means.  ``descs`` holds one raw descriptor array per training image."""
    pp = cfg.pipeline
    k = pp.k if k is None else k
    seed = pp.seed if seed is None else seed
    allv = np.concatenate([d for d in descs if d.size] or [np.zeros((0, 128))], axis=0)
    rng = np.random.default_rng(seed)
    if allv.shape[0] > pp.max_train_descriptors:
        idx = np.sort(rng.choice(allv.shape[0], pp.max_train_descriptors, replace=False))
        allv = allv[idx]
    rs = postprocess(DescriptorSet(allv, [], "raw"), None)
    pca = None
    if pp.pca:
        if rs.shape[0] < 256:
            raise InputError(f"PCA needs at least 256 training descriptors, got {rs.shape[0]}")
        pca = pca_train(rs)
        rs = postprocess(DescriptorSet(allv, [], "raw"), pca)
    if rs.shape[0] < k:
        raise InputError(f"codebook with k={k} needs at least {k} training descriptors, got {rs.shape[0]}")
    return kmeans_train(rs, k, seed), pca


def _codebook_for(cfg: Config, dataset: Manifest, warnings: list[str]) -> tuple[Codebook, PcaModel | None]:
    pp = cfg.pipeline
    if pp.codebook:
        return load_codebook_bundle(pp.codebook)
    if not pp.train_manifest:
        raise ConfigError("set [pipeline] codebook or train_manifest: the codebook needs its own image set")
    train = read_manifest(pp.train_manifest, require_groups=False)
    overlap = {p.resolve() for p in train.paths} & {p.resolve() for p in dataset.paths}
    if overlap:
        msg = f"{len(overlap)} codebook training image(s) also appear in the evaluation set"
        log.warning(msg)
        warnings.append(msg)
    descs = [image_descriptors(p, cfg).values for p in train.paths]
    return train_codebook_bundle(descs, cfg)


def evaluate_retrieval(manifest: Manifest | str | Path, cfg: Config) -> EvalResult:
    if not isinstance(manifest, Manifest):
        manifest = read_manifest(manifest)
    warnings: list[str] = []
    cb, pca = _codebook_for(cfg, manifest, warnings)
    vectors, counts = [], []
    for p in manifest.paths:
        ds = image_descriptors(p, cfg)
        counts.append(ds.values.shape[0])
        vectors.append(encode_descriptors(ds, cb, pca, cfg.pipeline.beta))
    mAP, aps, skipped = evaluate_vectors(np.stack(vectors), manifest.groups)
    if mAP is None:
        warnings.append("no query has a relevant database image; mAP is undefined")
    return EvalResult(mAP, aps, float(np.mean(counts)), counts, skipped, warnings)


def format_report(result: EvalResult, manifest: Manifest) -> str:
    lines = [f"# mAP\t{'undefined' if result.mAP is None else f'{result.mAP:.6f}'}", f"# N\t{result.mean_n:.3f}"]
    lines += [f"# warning\t{w}" for w in result.warnings]
    lines.append("query\tgroup\tAP")
    for q, ap in result.aps:
        lines.append(f"{manifest.paths[q]}\t{manifest.groups[q]}\t{ap:.6f}")
    for q in result.skipped:
        lines.append(f"{manifest.paths[q]}\t{manifest.groups[q]}\tskipped")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class SweepSpec:
    section: str
    key: str
    values: tuple[str, ...]
    base: Config


def read_sweep_spec(path: str | Path) -> SweepSpec:
    """A config file with an extra ``[sweep]`` section holding ``detector``,
    ``param`` (``section.key``) and comma-separated ``values``."""
    data = read_config_sections(path)
    sw = data.pop("sweep", None)
    data = resolve_paths(data, Path(path).parent)
    if sw is None:
        raise ConfigError(f"{path}: missing [sweep] section")
    unknown = set(sw) - {"detector", "param", "values"}
    if unknown:
        raise ConfigError(f"unknown key(s) in [sweep]: {', '.join(sorted(unknown))}")
    if "param" not in sw or "." not in sw["param"]:
        raise ConfigError("[sweep] param must look like section.key")
    section, key = sw["param"].split(".", 1)
    values = tuple(v.strip() for v in sw.get("values", "").split(",") if v.strip())
    if not values:
        raise ConfigError("[sweep] values must not be empty")
    base = parse_config_dict(data, sw.get("detector"))
    for v in values:  # validate up front
        base.with_value(section, key, v)
    return SweepSpec(section, key, values, base)


def run_sweep(manifest: Manifest | str | Path, spec: SweepSpec) -> list[tuple[str, float, float | None]]:
    if not isinstance(manifest, Manifest):
        manifest = read_manifest(manifest)
    rows = []
    for v in spec.values:
        res = evaluate_retrieval(manifest, spec.base.with_value(spec.section, spec.key, v))
        rows.append((v, res.mean_n, res.mAP))
    return rows


def format_sweep(rows, spec: SweepSpec) -> str:
    out = [f"{spec.section}.{spec.key}\tN\tmAP"]
    for v, n, m in rows:
        out.append(f"{v}\t{n:.3f}\t{'undefined' if m is None else f'{m:.6f}'}")
    return "\n".join(out) + "\n"


__all__ = [
    "EvalResult",
    "Manifest",
    "SweepSpec",
    "average_precision",
    "evaluate_retrieval",
    "evaluate_vectors",
    "format_report",
    "format_sweep",
    "load_codebook_bundle",
    "load_config",
    "rank_database",
    "read_manifest",
    "read_sweep_spec",
    "run_sweep",
    "train_codebook_bundle",
]
