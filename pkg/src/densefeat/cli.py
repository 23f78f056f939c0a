"""Command-line entry point: ``densefeat <command> ...``.

Exit status is 0 on success, 2 for unreadable or malformed input and 3 for
configuration errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .descriptor import DescriptorSet
from .encoding import DEFAULT_BETA, DEFAULT_K
from .evaluation import (
    evaluate_retrieval,
    format_report,
    format_sweep,
    load_codebook_bundle,
    read_manifest,
    read_sweep_spec,
    run_sweep,
    save_codebook_bundle,
    train_codebook_bundle,
)
from .formats import FormatError, read_descriptors, write_descriptors
from .keypoints import read_keypoints, write_keypoints
from .pipeline import (
    DETECTORS,
    ConfigError,
    InputError,
    describe_image,
    detect,
    encode_descriptors,
    load_config,
    parse_config_dict,
    prepare_image,
)
from .viz import line_plot, save_rgb, visualize_keypoints
from .zernike import build_filter_bank, export_filter_bank

IMAGE_SUFFIXES = {".png", ".pgm", ".ppm", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}

log = logging.getLogger("densefeat")


def _detector_name(name: str) -> str:
    key = name.replace("-", "_").lower()
    if key not in DETECTORS:
        raise ConfigError(f"unknown detector {name!r}; choose from {', '.join(d.replace('_', '-') for d in DETECTORS)}")
    return key


def _images(path: Path) -> list[Path]:
    if path.is_dir():
        found = sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        if not found:
            raise InputError(f"no images in {path}")
        return found
    if not path.exists():
        raise InputError(f"no such file {path}")
    return [path]


def _outdir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_detect(args) -> None:
    cfg = load_config(args.config, _detector_name(args.detector))
    out = _outdir(args.out)
    for img_path in _images(Path(args.inp)):
        img = prepare_image(img_path, cfg)
        kps = detect(img, cfg, img_path)
        write_keypoints(out / f"{img_path.stem}.kp", kps)
        print(f"{img_path}\t{len(kps)}")


def cmd_describe(args) -> None:
    cfg = load_config(args.config)
    if args.patch_size is not None:
        cfg = cfg.with_value("pipeline", "patch_size", args.patch_size)
    img = prepare_image(args.img, cfg)
    kps = _read_kp(args.kp)
    ds = describe_image(img, kps, cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_descriptors(out, ds.values)
    write_keypoints(out.with_name(out.name + ".kp"), ds.keypoints)
    print(f"{args.img}\t{len(ds)} of {len(kps)}")


def _read_kp(path):
    try:
        return read_keypoints(path)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read keypoints {path}: {exc}") from None


def _read_dsc(path) -> np.ndarray:
    try:
        return read_descriptors(path).astype(np.float64)
    except OSError as exc:
        raise InputError(f"cannot read descriptors {path}: {exc}") from None


def cmd_train_codebook(args) -> None:
    overrides = {"pipeline": {"k": str(args.k), "seed": str(args.seed), "pca": str(not args.no_pca).lower()}}
    if args.max_descriptors is not None:
        overrides["pipeline"]["max_train_descriptors"] = str(args.max_descriptors)
    cfg = parse_config_dict(overrides)
    descs = [_read_dsc(p) for p in args.inp]
    cb, pca = train_codebook_bundle(descs, cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_codebook_bundle(out, cb, pca)
    print(f"codebook k={cb.k} d={cb.dim} from {sum(d.shape[0] for d in descs)} descriptors")


def cmd_encode(args) -> None:
    if not 0 < args.beta <= 1:
        raise ConfigError("--beta must be in (0, 1]")
    cb, pca = load_codebook_bundle(args.cbk)
    raw = _read_dsc(args.inp)
    if raw.shape[0] and raw.shape[1] != cb.dim:
        raise InputError(f"descriptor dimension {raw.shape[1]} does not match codebook {cb.dim}")
    v = encode_descriptors(DescriptorSet(raw, [], "raw"), cb, pca, args.beta)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_descriptors(out, v[None, :])


def cmd_eval(args) -> None:
    cfg = load_config(args.config, _detector_name(args.detector) if args.detector else None)
    manifest = read_manifest(args.manifest)
    res = evaluate_retrieval(manifest, cfg)
    report = format_report(res, manifest)
    if args.out:
        (_outdir(args.out) / "report.tsv").write_text(report, encoding="utf-8")
    for w in res.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"mAP\t{'undefined' if res.mAP is None else f'{res.mAP:.6f}'}\tN\t{res.mean_n:.3f}")


def cmd_sweep(args) -> None:
    spec = read_sweep_spec(args.spec)
    rows = run_sweep(args.manifest, spec)
    out = _outdir(args.out)
    (out / "sweep.tsv").write_text(format_sweep(rows, spec), encoding="utf-8")
    save_rgb(out / "sweep.png", line_plot([r[1] for r in rows], [r[2] for r in rows]))
    print(format_sweep(rows, spec), end="")


def cmd_viz(args) -> None:
    cfg = load_config(args.config)
    img = prepare_image(args.img, cfg)
    kps = _read_kp(args.kp)
    overlay, n = visualize_keypoints(img, kps, args.first_scale)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_rgb(out, overlay)
    print(f"{n} markers")


def cmd_zernike_bank(args) -> None:
    try:
        bank = build_filter_bank(args.order, args.size)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    index = export_filter_bank(bank, _outdir(args.out))
    print(f"{len(bank.filters)} filters -> {index}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="densefeat", description="Dense local-feature detection and retrieval evaluation")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="detect keypoints in an image or a directory of images")
    p.add_argument("detector", help=", ".join(d.replace("_", "-") for d in DETECTORS))
    p.add_argument("--config")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("describe", help="raw SIFT descriptors for a keypoint file")
    p.add_argument("--kp", required=True)
    p.add_argument("--img", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--patch-size", type=int)
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("train-codebook", help="k-means codebook (and PCA sidecar) from descriptor files")
    p.add_argument("--in", dest="inp", nargs="+", required=True)
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--no-pca", action="store_true")
    p.add_argument("--max-descriptors", type=int)
    p.set_defaults(func=cmd_train_codebook)

    p = sub.add_parser("encode", help="VLAD vector of a descriptor file")
    p.add_argument("--cbk", required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--beta", type=float, default=DEFAULT_BETA)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("eval", help="retrieval mAP over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--detector")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="mAP against descriptor count over a parameter sweep")
    p.add_argument("--manifest", required=True)
    p.add_argument("--spec", required=True)
    p.add_argument("--out", default="sweep_out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("viz", help="draw keypoints on an image")
    p.add_argument("--img", required=True)
    p.add_argument("--kp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--first-scale", action="store_true")
    p.set_defaults(func=cmd_viz)

    p = sub.add_parser("zernike-bank", help="export the pseudo-Zernike filter bank")
    p.add_argument("--order", type=int, required=True)
    p.add_argument("--size", type=int, default=11)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_zernike_bank)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except (InputError, FormatError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
