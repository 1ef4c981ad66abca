"""Model training over all regions and the leave-one-out evaluation harness."""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .cases import Case, CaseLibrary
from .config import PipelineConfig
from .frames import LibraryFeatures, Target
from .learning.oracle import generate_training_data
from .learning.selection import train_region_models
from .metrics import nmi, patch_nmi
from .synthesis import synthesize_portrait, synthesize_regions

log = logging.getLogger(__name__)

REPORT_VERSION = 1
THREADS_ENV = "SKETCHCBR_THREADS"


def worker_count(default=1) -> int:
    raw = os.environ.get(THREADS_ENV, "")
    try:
        return max(1, int(raw)) if raw else default
    except ValueError:
        return default


def generate_all_samples(lib: CaseLibrary, config: PipelineConfig, features=None) -> dict:
    """Training samples of every region, keyed by region id."""
    features = features or LibraryFeatures(lib)
    return {r: generate_training_data(lib, r, seed=config.seed, threshold=config.threshold,
                                      max_iters=config.max_iters, folds=config.oracle_folds,
                                      bins=config.nmi_bins, features=features)
            for r in lib.region_map.region_ids}


def train_all(samples: dict, config: PipelineConfig) -> dict:
    """Fitness and weight models for every region's sample set."""
    return {r: train_region_models(samples[r], zoo=config.zoo, folds=config.cv_folds, seed=config.seed,
                                   max_features=config.feature_cap, bins=config.mrmr_bins)
            for r in sorted(samples)}


def portrait(photo, landmarks, lib, models, config: PipelineConfig, features=None):
    return synthesize_portrait(photo, landmarks, lib, models, threshold=config.threshold,
                               max_iters=config.max_iters, bins=config.nmi_bins, feather=config.feather,
                               do_sharpen=config.sharpen, sharpen_levels=config.sharpen_levels,
                               kappa=config.kappa, features=features)


def score_case(case: Case, pool: CaseLibrary, models, config: PipelineConfig, features=None):
    """Per-region NMI to the case's own neutral sketch, single-case and full loop.

    Returns
    -------
    (row, final portrait)
    """
    features = features or LibraryFeatures(pool)
    target = Target.from_case(case, pool.region_map)
    single, _ = synthesize_regions(target, pool, None, max_iters=1, bins=config.nmi_bins, features=features)
    multi, traces = synthesize_regions(target, pool, models, threshold=config.threshold,
                                       max_iters=config.max_iters, bins=config.nmi_bins, features=features)
    regions = {}
    for s, m in zip(single, multi):
        gt = target.crop_patch(s.region, case.neutral_sketch)
        regions[str(s.region)] = {
            "single": patch_nmi(s, gt, config.nmi_bins),
            "multi": patch_nmi(m, gt, config.nmi_bins),
            "steps": len(traces[s.region].steps),
        }
    sketch, trace = portrait(case.photo, case.photo_landmarks, pool, models, config, features)
    row = {
        "case": case.id,
        "regions": regions,
        "portrait_nmi": nmi(sketch, case.sketch, bins=config.nmi_bins),
        "trace": trace.to_json_obj(),
    }
    return row, sketch


def summarize(rows) -> dict:
    pairs = [(r["single"], r["multi"]) for row in rows for r in row["regions"].values()]
    if not pairs:
        return {"pairs": 0}
    s, m = np.array(pairs).T
    return {
        "pairs": len(pairs),
        "mean_single": float(s.mean()),
        "mean_multi": float(m.mean()),
        "multi_at_least_single": float((m >= s).mean()),
        "mean_portrait_nmi": float(np.mean([row["portrait_nmi"] for row in rows])),
    }


def _report(kind, lib, config, rows):
    return {
        "schema_version": REPORT_VERSION,
        "kind": kind,
        "style_id": lib.style_id,
        "cases": len(lib),
        "config": config.to_json_obj(),
        "rows": rows,
        "summary": summarize(rows),
    }


def _run(fn, items, threads):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def evaluate(lib: CaseLibrary, models: dict, config: PipelineConfig, sketch_dir=None, threads=None) -> dict:
    """Score every case against the rest of the library with fixed, given models."""
    threads = threads or worker_count()

    def one(case):
        pool = lib.without(case.id)
        return score_case(case, pool, models, config)

    results = _run(one, lib.cases, threads)
    rows = _write_sketches(results, sketch_dir)
    return _report("evaluate", lib, config, rows)


def loocv(lib: CaseLibrary, config: PipelineConfig, sketch_dir=None, threads=None) -> dict:
    """Leave-one-out: for each case, train on the others and synthesise it."""
    threads = threads or worker_count()

    def one(case):
        pool = lib.without(case.id)
        features = LibraryFeatures(pool)
        models = train_all(generate_all_samples(pool, config, features), config)
        log.info("loocv: models for %s trained", case.id)
        return score_case(case, pool, models, config, features)

    results = _run(one, lib.cases, threads)
    rows = _write_sketches(results, sketch_dir)
    return _report("loocv", lib, config, rows)


def _write_sketches(results, sketch_dir):
    rows = []
    for row, sketch in results:
        if sketch_dir is not None:
            d = Path(sketch_dir)
            d.mkdir(parents=True, exist_ok=True)
            name = f"{row['case']}.png"
            io.write_png(d / name, sketch)
            row["sketch_png"] = f"{d.name}/{name}"
        rows.append(row)
    return rows
