"""Command-line interface: ``sketchcbr <command> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import io
from .cases import ingest_dataset, load_library, save_library
from .config import PipelineConfig, load_config
from .errors import DimensionError, IoError, SketchError
from .evaluation import evaluate, generate_all_samples, loocv, portrait, train_all
from .learning.storage import load_models, read_samples, save_models, write_samples

log = logging.getLogger("sketchcbr")


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def _write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_build_cases(args, cfg):
    region_map = io.read_region_map(args.region_map) if args.region_map else None
    lib = ingest_dataset(args.manifest, region_map, args.style_id)
    save_library(lib, args.out)
    log.info("built %d cases into %s", len(lib), args.out)


def cmd_gen_train(args, cfg):
    lib = load_library(args.lib)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for region, samples in generate_all_samples(lib, cfg).items():
        write_samples(out / f"region_{region}.stsm", samples)
        log.info("region %d: %d samples", region, len(samples))


def cmd_train(args, cfg):
    src = Path(args.samples)
    files = sorted(src.glob("region_*.stsm")) if src.is_dir() else [src]
    if not files or not files[0].exists():
        raise IoError(f"no sample files (region_*.stsm) in {src}")
    samples = {s.region: s for s in (read_samples(f) for f in files)}
    save_models(args.out, train_all(samples, cfg))


def cmd_synthesize(args, cfg):
    lib = load_library(args.lib)
    models = load_models(args.models)
    photo = io.read_png(args.photo)
    if photo.shape != (lib.height, lib.width):
        raise DimensionError(f"{args.photo}: image is {photo.shape[1]}x{photo.shape[0]}, "
                             f"library uses {lib.width}x{lib.height}")
    landmarks = io.read_landmarks(args.landmarks, lib.region_map.n_landmarks)
    sketch, trace = portrait(photo, landmarks, lib, models, cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    io.write_png(out, sketch)
    _write_json(out.with_suffix(".json"), trace.to_json_obj())


def cmd_evaluate(args, cfg):
    lib = load_library(args.lib)
    models = load_models(args.models)
    report = Path(args.report)
    _write_json(report, evaluate(lib, models, cfg, report.parent / f"{report.stem}_sketches"))


def cmd_loocv(args, cfg):
    lib = ingest_dataset(args.manifest)
    report = Path(args.report)
    _write_json(report, loocv(lib, cfg, report.parent / f"{report.stem}_sketches"))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline INI file (defaults apply when omitted)")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    p = argparse.ArgumentParser(prog="sketchcbr", description="Case-based facial sketch synthesis.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("build-cases", parents=[common], help="build a case library from a dataset manifest")
    s.add_argument("manifest")
    s.add_argument("out")
    s.add_argument("--region-map", help="region map JSON (default: shipped 67-point map)")
    s.add_argument("--style-id")
    s.set_defaults(func=cmd_build_cases)

    s = sub.add_parser("gen-train", parents=[common], help="generate per-region training samples")
    s.add_argument("lib")
    s.add_argument("out")
    s.set_defaults(func=cmd_gen_train)

    s = sub.add_parser("train", parents=[common], help="select and fit per-region models")
    s.add_argument("samples", help="directory of region_*.stsm files (or one file)")
    s.add_argument("out")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("synthesize", parents=[common], help="render a sketch for one photo")
    s.add_argument("lib")
    s.add_argument("models")
    s.add_argument("photo")
    s.add_argument("landmarks")
    s.add_argument("out", help="output PNG; the trace goes next to it as .json")
    s.set_defaults(func=cmd_synthesize)

    s = sub.add_parser("evaluate", parents=[common], help="score every case against the rest")
    s.add_argument("lib")
    s.add_argument("models")
    s.add_argument("report")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("loocv", parents=[common], help="leave-one-out train and evaluate")
    s.add_argument("manifest")
    s.add_argument("report")
    s.set_defaults(func=cmd_loocv)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args, _config(args))
    except SketchError as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        if getattr(exc, "residual", None) is not None:
            err["residual"] = exc.residual
        print(json.dumps(err), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
