"""Text tables, JSON reports and image mosaics."""
from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Dict, Sequence

import numpy as np

from ..flowcore import flow_to_color, mosaic, write_image
from .ablation import VARIANT_LABELS, ablation_grid
from .protocol import EvalReport


def _pm(stat: dict, fmt: str = "{:.2f}") -> str:
    return f"{fmt.format(stat['mean'])} ± {fmt.format(stat['std'])}"


def reconstruction_table(report: EvalReport) -> str:
    """Rows per dataset: EPE, SSIM, RMSE (mean ± std over folds) for the frontalized output."""
    lines = [f"{'dataset':<16} {'EPE':>16} {'SSIM':>16} {'RMSE':>16}"]
    for ds, a in report.aggregate().items():
        lines.append(f"{ds:<16} {_pm(a['epe']['frontalized']):>16} {_pm(a['ssim']['frontalized']):>16} "
                     f"{_pm(a['rmse']['frontalized']):>16}")
    return "\n".join(lines)


def accuracy_table(report: EvalReport) -> str:
    """Baseline, frontalized and Δ accuracy per dataset in flow and image domains."""
    head = f"{'dataset':<16} {'domain':<6} {'baseline %':>16} {'frontalized %':>16} {'Δ (%)':>16}"
    lines = [head]
    for ds, a in report.aggregate().items():
        for dom, key in (("flow", "flow"), ("image", "image")):
            acc = a[f"{key}_accuracy"]
            lines.append(f"{ds:<16} {dom:<6} {_pm(acc['baseline']):>16} {_pm(acc['frontalized']):>16} "
                         f"{_pm(a[f'{key}_delta']):>16}")
    return "\n".join(lines)


def ablation_table(reports: Dict[str, EvalReport]) -> str:
    grid = ablation_grid(reports)
    datasets = sorted({ds for row in grid.values() for ds in row})
    cols = "".join(f" {ds + ' flow':>14} {ds + ' image':>14}" for ds in datasets)
    lines = [f"{'variant':<36}{cols}"]
    for variant, row in grid.items():
        cells = "".join(f" {row[ds]['flow']:>14.2f} {row[ds]['image']:>14.2f}" if ds in row else f" {'-':>14} {'-':>14}"
                        for ds in datasets)
        lines.append(f"{VARIANT_LABELS[variant]:<36}{cells}")
    return "\n".join(lines)


def _atomic_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def write_eval_report(report: EvalReport, out_dir) -> Dict[str, Path]:
    out = Path(out_dir)
    paths = {"json": out / "eval_report.json", "reconstruction": out / "reconstruction_table.txt",
             "accuracy": out / "accuracy_table.txt"}
    _atomic_text(paths["json"], json.dumps(report.to_dict(), indent=2, sort_keys=True, allow_nan=True))
    _atomic_text(paths["reconstruction"], reconstruction_table(report) + "\n")
    _atomic_text(paths["accuracy"], accuracy_table(report) + "\n")
    return paths


def write_ablation_report(reports: Dict[str, EvalReport], out_dir) -> Dict[str, Path]:
    out = Path(out_dir)
    paths = {"json": out / "ablation_report.json", "table": out / "ablation_table.txt"}
    payload = {"grid": ablation_grid(reports), "variants": {v: r.to_dict() for v, r in reports.items()}}
    _atomic_text(paths["json"], json.dumps(payload, indent=2, sort_keys=True))
    _atomic_text(paths["table"], ablation_table(reports) + "\n")
    return paths


def sample_mosaic(rows: Sequence[dict], path) -> np.ndarray:
    """One row per sample: input flow, ground truth, frontalized flow (colour-coded) and the warped face.

    Each row dict holds FlowFields ``input``, ``target``, ``frontalized`` and an image ``warped``.
    Flow colours share one magnitude scale per row.
    """
    tiles = []
    for r in rows:
        flows = [r["input"], r["target"], r["frontalized"]]
        scale = max(float(f.magnitude().max()) for f in flows) or 1.0
        tiles.append([flow_to_color(f, max_magnitude=scale).pixels for f in flows] + [np.clip(r["warped"], 0, 1)])
    img = mosaic(tiles)
    write_image(path, img)
    return img
