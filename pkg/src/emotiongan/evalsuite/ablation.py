"""Drop-one-loss ablation grid."""
from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import Dict, Optional, Sequence

from ..dataio.corpus import PairedSample
from ..dataio.folds import FoldSplit
from ..errors import ConfigError
from ..losses import ABLATIONS
from ..trainer.config import TrainConfig
from ..trainer.loop import TensorCorpus, run_training
from .protocol import EvalReport, evaluate_fold

VARIANT_LABELS = {
    "no_recon": "without EPE + Charbonnier",
    "no_expression": "without expression discriminator",
    "no_warping": "without warping loss",
    "full": "full model",
}


def check_variants(variants: Optional[Sequence[str]]) -> list:
    chosen = list(ABLATIONS) if variants is None else list(variants)
    unknown = [v for v in chosen if v not in ABLATIONS]
    if unknown:
        raise ConfigError(f"unknown ablation variant(s) {unknown}; choose from {list(ABLATIONS)}")
    if len(set(chosen)) != len(chosen):
        raise ConfigError(f"duplicate ablation variants in {chosen}")
    return chosen


def run_ablation(samples: Sequence[PairedSample], folds: FoldSplit, cfg: TrainConfig,
                 variants: Optional[Sequence[str]] = None, fold_indices: Optional[Sequence[int]] = None,
                 out_dir=None, progress=None) -> Dict[str, EvalReport]:
    """Train and evaluate each variant with identical seeds, data and config apart from the dropped loss."""
    chosen = check_variants(variants)
    corpus = TensorCorpus(samples, cfg.clip_threshold)
    by_id = {s.sample_id: s for s in samples}
    reports = {}
    for variant in chosen:
        vcfg = dataclasses.replace(cfg, ablation=variant)
        vdir = Path(out_dir) / variant if out_dir is not None else None
        runs = run_training(corpus, folds, vcfg, vdir, fold_indices=fold_indices, progress=progress)
        per_fold = {f: evaluate_fold(run.models, [by_id[i] for i in run.test_ids], clip_threshold=cfg.clip_threshold,
                                     fold=f) for f, run in runs.items()}
        reports[variant] = EvalReport(per_fold, {"variant": variant, "label": VARIANT_LABELS[variant]})
    return reports


def ablation_grid(reports: Dict[str, EvalReport]) -> dict:
    """{variant: {dataset: {"flow": mean acc, "image": mean acc}}}, variants in canonical order."""
    grid = {}
    for variant in ABLATIONS:
        if variant not in reports:
            continue
        agg = reports[variant].aggregate()
        grid[variant] = {ds: {"flow": a["flow_accuracy"]["frontalized"]["mean"],
                              "image": a["image_accuracy"]["frontalized"]["mean"]} for ds, a in agg.items()}
    return grid
