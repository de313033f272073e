"""Fold evaluation, cross-subject transfer and report aggregation."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import torch
from torch import nn

from ..dataio.corpus import PairedSample
from ..errors import DataError, NotFittedError
from ..flowcore import FaceFrame, FlowField, denormalize_tensor, normalize_array
from ..trainer.loop import Models, TensorCorpus
from .metrics import rmse, ssim

EPE_CONVENTION = "per-sample mean endpoint error on denormalized 128x128 flows, then mean over samples"


class IdentityFrontalizer(nn.Module):
    """Frontalizer that returns its input unchanged."""

    def forward(self, nflow):
        return nflow


def _chunks(n, size):
    for i in range(0, n, size):
        yield slice(i, i + size)


@torch.no_grad()
def _apply(module: nn.Module, *tensors, batch_size: int = 16) -> torch.Tensor:
    was = module.training
    module.eval()
    outs = [module(*(t[s] for t in tensors)) for s in _chunks(len(tensors[0]), batch_size)]
    module.train(was)
    return torch.cat(outs) if outs else torch.zeros(0)


def _mean_std(values) -> Dict[str, float]:
    v = np.asarray(list(values), dtype=np.float64)
    if v.size == 0:
        return {"mean": float("nan"), "std": float("nan"), "n": 0}
    return {"mean": float(v.mean()), "std": float(v.std()), "n": int(v.size)}


def _accuracy(logits: torch.Tensor, labels: torch.Tensor) -> float:
    if len(labels) == 0:
        return float("nan")
    return float((logits.argmax(1) == labels).double().mean() * 100.0)


@dataclass
class DatasetFoldResult:
    dataset: str
    fold: int
    n: int
    epe: Dict[str, Dict[str, float]]
    ssim: Dict[str, Dict[str, float]]
    rmse: Dict[str, Dict[str, float]]
    flow_accuracy: Dict[str, float]
    image_accuracy: Dict[str, float]
    per_sample: Dict[str, Dict[str, float]] = field(default_factory=dict)

    @property
    def flow_delta(self) -> float:
        return self.flow_accuracy["frontalized"] - self.flow_accuracy["baseline"]

    @property
    def image_delta(self) -> float:
        return self.image_accuracy["frontalized"] - self.image_accuracy["baseline"]

    def to_dict(self) -> dict:
        return {"dataset": self.dataset, "fold": self.fold, "n": self.n, "epe": self.epe, "ssim": self.ssim,
                "rmse": self.rmse, "flow_accuracy": self.flow_accuracy, "image_accuracy": self.image_accuracy,
                "flow_delta": self.flow_delta, "image_delta": self.image_delta}


def evaluate_fold(models: Models, samples: Sequence[PairedSample], scorers: Optional[dict] = None,
                  clip_threshold: float = 10.0, fold: int = 0, frontalizer: Optional[nn.Module] = None,
                  batch_size: int = 16) -> Dict[str, DatasetFoldResult]:
    """Frontalize and warp a test fold, then score baseline and frontalized variants per dataset.

    Baseline flows are the raw non-frontal flows; baseline images are the
    neutral faces warped by the image generator with those raw flows, so an
    identity frontalizer reproduces the baseline exactly in both domains.
    ``scorers`` may override ``{"flow": ..., "image": ...}`` (defaults: the
    expression discriminator and the image expression scorer).
    """
    if models is None or not getattr(models, "fitted", False):
        raise NotFittedError("evaluate_fold needs trained or loaded models (missing checkpoint?)")
    if not samples:
        return {}
    scorers = dict(scorers or {})
    flow_scorer = scorers.get("flow", models.d_e)
    image_scorer = scorers.get("image", models.scorer)
    frontalizer = frontalizer if frontalizer is not None else models.g_f
    tc = TensorCorpus(samples, clip_threshold)

    variants = {"baseline": tc.inputs, "frontalized": _apply(frontalizer, tc.inputs, batch_size=batch_size)}
    gt = denormalize_tensor(tc.targets, clip_threshold)
    epe = {}
    faces = {}
    flow_logits = {}
    image_logits = {}
    for name, nflow in variants.items():
        uv = denormalize_tensor(nflow, clip_threshold)
        epe[name] = torch.linalg.vector_norm(uv - gt, dim=1).mean(dim=(1, 2)).double().numpy()
        faces[name] = _apply(models.g_w, tc.neutral, nflow, batch_size=batch_size)
        flow_logits[name] = _apply(flow_scorer, nflow, batch_size=batch_size)
        image_logits[name] = _apply(image_scorer, faces[name], batch_size=batch_size)

    target_np = tc.target_faces.permute(0, 2, 3, 1).numpy()
    ssim_v = {n: np.array([ssim(f, t) for f, t in zip(faces[n].permute(0, 2, 3, 1).numpy(), target_np)])
              for n in variants}
    rmse_v = {n: np.array([rmse(f, t) for f, t in zip(faces[n].permute(0, 2, 3, 1).numpy(), target_np)])
              for n in variants}

    by_dataset = defaultdict(list)
    for i, s in enumerate(samples):
        by_dataset[s.dataset].append(i)
    results = {}
    for ds, idx in sorted(by_dataset.items()):
        ix = torch.as_tensor(idx)
        labels = tc.labels[ix]
        results[ds] = DatasetFoldResult(
            dataset=ds, fold=fold, n=len(idx),
            epe={n: _mean_std(epe[n][idx]) for n in variants},
            ssim={n: _mean_std(ssim_v[n][idx]) for n in variants},
            rmse={n: _mean_std(rmse_v[n][idx]) for n in variants},
            flow_accuracy={n: _accuracy(flow_logits[n][ix], labels) for n in variants},
            image_accuracy={n: _accuracy(image_logits[n][ix], labels) for n in variants},
            per_sample={tc.ids[i]: {"epe_baseline": float(epe["baseline"][i]),
                                    "epe_frontalized": float(epe["frontalized"][i])} for i in idx},
        )
    return results


@dataclass
class EvalReport:
    """Per-dataset, per-fold results plus fold-level means and standard deviations."""

    folds: Dict[int, Dict[str, DatasetFoldResult]]
    metadata: dict = field(default_factory=dict)

    def datasets(self) -> List[str]:
        return sorted({ds for res in self.folds.values() for ds in res})

    def aggregate(self) -> dict:
        out = {}
        for ds in self.datasets():
            rows = [self.folds[f][ds] for f in sorted(self.folds) if ds in self.folds[f]]
            agg = {}
            for metric in ("epe", "ssim", "rmse"):
                agg[metric] = {v: _mean_std(getattr(r, metric)[v]["mean"] for r in rows)
                               for v in ("baseline", "frontalized")}
            for metric in ("flow_accuracy", "image_accuracy"):
                agg[metric] = {v: _mean_std(getattr(r, metric)[v] for r in rows)
                               for v in ("baseline", "frontalized")}
            agg["flow_delta"] = _mean_std(r.flow_delta for r in rows)
            agg["image_delta"] = _mean_std(r.image_delta for r in rows)
            agg["n_samples"] = int(sum(r.n for r in rows))
            out[ds] = agg
        return out

    def to_dict(self) -> dict:
        return {
            "metadata": dict(self.metadata, epe_convention=EPE_CONVENTION, accuracy_units="percent"),
            "folds": {str(f): {ds: r.to_dict() for ds, r in res.items()} for f, res in sorted(self.folds.items())},
            "aggregate": self.aggregate(),
        }


def average_face(samples: Sequence[PairedSample]) -> FaceFrame:
    """Pixel mean of the (aligned, frontal) neutral faces."""
    if not samples:
        raise DataError("no samples to average")
    px = np.mean([s.neutral_face.pixels for s in samples], axis=0)
    return FaceFrame(np.clip(px, 0, 1), subject_id="average", expression="neutral")


@torch.no_grad()
def transfer_expression(source_flow: FlowField, target_neutral: FaceFrame, models: Models,
                        clip_threshold: float = 10.0, frontalize: bool = True) -> FaceFrame:
    """Warp the (optionally frontalized) source motion onto another identity's neutral face."""
    if models is None or not getattr(models, "fitted", False):
        raise NotFittedError("transfer_expression needs trained or loaded models")
    if target_neutral.pixels.shape != (128, 128, 3):
        raise DataError(f"target face must be 128×128×3, got {target_neutral.pixels.shape}")
    nflow = torch.from_numpy(normalize_array(source_flow.to_array(), clip_threshold))[None]
    if frontalize:
        nflow = _apply(models.g_f, nflow)
    face = torch.from_numpy(np.ascontiguousarray(target_neutral.pixels.transpose(2, 0, 1)))[None].float()
    out = _apply(models.g_w, face, nflow)[0].permute(1, 2, 0).numpy()
    return FaceFrame(np.clip(out, 0.0, 1.0), subject_id=target_neutral.subject_id,
                     meta={"transferred": True})


@torch.no_grad()
def frontalize_flow(flow: FlowField, models: Models, clip_threshold: float = 10.0) -> FlowField:
    if models is None or not getattr(models, "fitted", False):
        raise NotFittedError("frontalize_flow needs trained or loaded models")
    nflow = torch.from_numpy(normalize_array(flow.to_array(), clip_threshold))[None]
    uv = denormalize_tensor(_apply(models.g_f, nflow), clip_threshold)[0].numpy()
    return FlowField(uv[0], uv[1])
