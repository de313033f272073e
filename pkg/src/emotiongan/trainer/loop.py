"""Two-phase training: flow frontalization and motion warping, coupled at the connection epoch."""
from __future__ import annotations

import contextlib
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import torch
from torch import nn

from ..dataio.corpus import PairedSample, stable_seed
from ..dataio.folds import FoldSplit
from ..errors import CheckpointError, DataError, NumericAbort
from ..flowcore.normalize import normalize_array
from ..losses import (
    coupling_active, discriminator_adversarial, expression_ce, flow_reconstruction_terms, flow_total,
    generator_adversarial, warping_total,
)
from ..nets import (
    ExpressionClassifier, FlowGenerator, ImageGenerator, PatchDiscriminator, build_extractor, build_scorer,
    load_checkpoint, save_checkpoint,
)
from .config import TrainConfig, config_hash, dump_config

log = logging.getLogger(__name__)


# Data ------------------------------------------------------------------------

@dataclass
class Batch:
    inputs: torch.Tensor        # N×2×H×W normalized non-frontal flows
    targets: torch.Tensor       # N×2×H×W normalized frontal flows
    neutral: torch.Tensor       # N×3×H×W
    target_faces: torch.Tensor  # N×3×H×W
    labels: torch.Tensor        # N
    ids: List[str]

    def __len__(self):
        return len(self.ids)

    def digest(self) -> str:
        return hashlib.sha1(self.inputs.detach().numpy().tobytes()).hexdigest()[:12]


class TensorCorpus:
    """Samples converted once to tensors, sliced into batches by index."""

    def __init__(self, samples: Sequence[PairedSample], clip_threshold: float):
        self.samples = list(samples)
        self.ids = [s.sample_id for s in self.samples]
        self.index = {sid: i for i, sid in enumerate(self.ids)}
        self.clip = clip_threshold
        if not self.samples:
            self.inputs = torch.zeros(0, 2, 128, 128)
            self.targets = torch.zeros(0, 2, 128, 128)
            self.neutral = torch.zeros(0, 3, 128, 128)
            self.target_faces = torch.zeros(0, 3, 128, 128)
            self.labels = torch.zeros(0, dtype=torch.long)
            return
        self.inputs = torch.from_numpy(np.stack([normalize_array(s.input_flow.to_array(), clip_threshold)
                                                 for s in self.samples]))
        self.targets = torch.from_numpy(np.stack([normalize_array(s.target_flow.to_array(), clip_threshold)
                                                  for s in self.samples]))
        self.neutral = torch.from_numpy(np.stack([s.neutral_face.pixels.transpose(2, 0, 1)
                                                  for s in self.samples])).float()
        self.target_faces = torch.from_numpy(np.stack([s.target_face.pixels.transpose(2, 0, 1)
                                                       for s in self.samples])).float()
        self.labels = torch.tensor([int(s.label) for s in self.samples], dtype=torch.long)

    def __len__(self):
        return len(self.samples)

    def batch(self, indices) -> Batch:
        idx = torch.as_tensor(np.asarray(indices, dtype=np.int64))
        return Batch(self.inputs[idx], self.targets[idx], self.neutral[idx], self.target_faces[idx],
                     self.labels[idx], [self.ids[i] for i in idx.tolist()])

    def positions(self, ids) -> np.ndarray:
        return np.array([self.index[i] for i in ids], dtype=np.int64)


def epoch_batches(positions: np.ndarray, batch_size: int, seed: int, epoch: int, tag: str = "main"):
    """Deterministic per-epoch shuffle of ``positions`` split into batches."""
    rng = np.random.default_rng(stable_seed(seed, tag, epoch))
    order = positions[rng.permutation(len(positions))]
    return [order[i:i + batch_size] for i in range(0, len(order), batch_size)]


# Models ----------------------------------------------------------------------

@dataclass
class Models:
    g_f: nn.Module
    d_p: nn.Module
    d_e: nn.Module
    g_w: nn.Module
    scorer: nn.Module
    extractor: Optional[nn.Module] = None
    fitted: bool = False

    def trainable(self) -> Dict[str, nn.Module]:
        return {"flow_generator": self.g_f, "patch_discriminator": self.d_p,
                "expression_discriminator": self.d_e, "image_generator": self.g_w,
                "expression_scorer": self.scorer}

    def eval(self):
        for m in self.trainable().values():
            m.eval()
        return self


def build_models(cfg: TrainConfig) -> Models:
    torch.manual_seed(cfg.seed)
    spec = cfg.nets
    g_f = FlowGenerator(spec.flow_generator)
    d_p = PatchDiscriminator(spec.patch_discriminator)
    d_e = ExpressionClassifier(spec.expression_discriminator, in_channels=2)
    g_w = ImageGenerator(spec.image_generator)
    scorer = build_scorer(cfg.scorer.backend, spec.expression_scorer, cfg.scorer.path)
    extractor = None
    if cfg.weights.alpha_perc > 0:
        p = cfg.perceptual
        extractor = build_extractor(p.backend, p.weights_path, widths=p.widths, seed=p.seed)
    return Models(g_f, d_p, d_e, g_w, scorer, extractor)


def build_optimizers(models: Models, cfg: TrainConfig) -> Dict[str, torch.optim.Optimizer]:
    betas = tuple(cfg.optim.adam_betas)
    opts = {
        "flow_generator": torch.optim.Adam(models.g_f.parameters(), lr=cfg.lr.flow_generator, betas=betas),
        "patch_discriminator": torch.optim.Adam(models.d_p.parameters(), lr=cfg.lr.patch_discriminator,
                                                betas=betas),
        "expression_discriminator": torch.optim.SGD(models.d_e.parameters(), lr=cfg.lr.expression_discriminator,
                                                    momentum=cfg.optim.sgd_momentum),
        "image_generator": torch.optim.Adam(models.g_w.parameters(), lr=cfg.lr.image_generator, betas=betas),
    }
    if cfg.scorer.backend == "builtin":
        opts["expression_scorer"] = torch.optim.Adam(models.scorer.parameters(), lr=cfg.scorer.lr)
    return opts


BASE_RATES = {
    "flow_generator": lambda c: c.lr.flow_generator,
    "patch_discriminator": lambda c: c.lr.patch_discriminator,
    "expression_discriminator": lambda c: c.lr.expression_discriminator,
    "image_generator": lambda c: c.lr.image_generator,
}


def lr_schedule(base_rate: float, epoch: int, cfg: TrainConfig) -> float:
    """Linear decay from ``base_rate`` at epoch 0 to ``final_fraction·base_rate`` at the last epoch."""
    if cfg.lr_decay.kind == "none" or cfg.epochs == 1:
        return base_rate
    t = min(max(epoch, 0), cfg.epochs - 1) / (cfg.epochs - 1)
    return base_rate * (1.0 - (1.0 - cfg.lr_decay.final_fraction) * t)


def set_epoch_rates(optimizers, epoch: int, cfg: TrainConfig) -> None:
    for name, opt in optimizers.items():
        if name in BASE_RATES:
            rate = lr_schedule(BASE_RATES[name](cfg), epoch, cfg)
            for group in opt.param_groups:
                group["lr"] = rate


@contextlib.contextmanager
def frozen(*modules):
    """Disable parameter gradients (gradients still flow through to inputs)."""
    saved = [[p.requires_grad for p in m.parameters()] for m in modules]
    for m in modules:
        m.requires_grad_(False)
    try:
        yield
    finally:
        for m, flags in zip(modules, saved):
            for p, f in zip(m.parameters(), flags):
                p.requires_grad_(f)


@contextlib.contextmanager
def eval_mode(*modules):
    saved = [m.training for m in modules]
    for m in modules:
        m.eval()
    try:
        yield
    finally:
        for m, t in zip(modules, saved):
            m.train(t)


def _check_loss(value: torch.Tensor, name: str, batch: Batch, step_id):
    if not torch.isfinite(value).all():
        raise NumericAbort(f"non-finite {name} loss at step {step_id}",
                           {"term": name, "step": step_id, "inputs_hash": batch.digest(), "ids": batch.ids})


def _guarded_step(opt: torch.optim.Optimizer, module: nn.Module, name: str, batch: Batch, step_id):
    for pname, p in module.named_parameters():
        if p.grad is not None and not torch.isfinite(p.grad).all():
            raise NumericAbort(f"non-finite gradient in {name}.{pname} at step {step_id}",
                               {"parameter": f"{name}.{pname}", "step": step_id, "inputs_hash": batch.digest()})
    opt.step()


# Steps -----------------------------------------------------------------------

def train_step_frontalization(batch: Batch, models: Models, optimizers, cfg: TrainConfig, epoch: int,
                              step_id=None) -> Dict[str, float]:
    """One D_P update, one D_E update, then one G_F update with the coupled flow total."""
    if len(batch) == 0:
        raise DataError("empty batch")
    w = cfg.weights
    g_f, d_p, d_e = models.g_f, models.d_p, models.d_e
    for m in (g_f, d_p, d_e):
        m.train()
    x, y = batch.inputs, batch.targets

    generated = g_f(x)

    opt = optimizers["patch_discriminator"]
    opt.zero_grad(set_to_none=True)
    loss_dp = discriminator_adversarial(d_p(x, y), d_p(x, generated.detach()))
    _check_loss(loss_dp, "patch_discriminator", batch, step_id)
    loss_dp.backward()
    _guarded_step(opt, d_p, "patch_discriminator", batch, step_id)

    opt = optimizers["expression_discriminator"]
    opt.zero_grad(set_to_none=True)
    loss_de = expression_ce(d_e(y), batch.labels)
    _check_loss(loss_de, "expression_discriminator", batch, step_id)
    loss_de.backward()
    _guarded_step(opt, d_e, "expression_discriminator", batch, step_id)

    opt = optimizers["flow_generator"]
    opt.zero_grad(set_to_none=True)
    terms = {}
    with frozen(d_p, d_e, models.g_w, models.scorer), eval_mode(d_e, models.scorer):
        adv = generator_adversarial(d_p(x, generated))
        expr = expression_ce(d_e(generated), batch.labels)
        epe, char = flow_reconstruction_terms(generated, y, cfg.clip_threshold, w)
        warping = None
        if coupling_active(epoch, w) and cfg.ablation != "no_warping":
            warped = models.g_w(batch.neutral, generated)
            warping = warping_total(warped, batch.target_faces, models.scorer(warped), batch.labels, w,
                                    models.extractor, terms)
        total = flow_total(adv, expr, epe, char, warping, epoch, w, cfg.ablation)
        _check_loss(total, "flow_generator", batch, step_id)
        total.backward()
    _guarded_step(opt, g_f, "flow_generator", batch, step_id)

    return {
        "patch_discriminator": loss_dp.item(), "expression_discriminator": loss_de.item(),
        "adversarial": adv.item(), "expression": expr.item(), "gan": 0.5 * (adv.item() + expr.item()),
        "epe": epe.item(), "charbonnier": char.item(),
        "warping": warping.item() if warping is not None else 0.0,
        "total": total.item(),
    }


def train_step_warping(batch: Batch, models: Models, optimizers, cfg: TrainConfig, step_id=None) -> Dict[str, float]:
    """One G_W update on its own total, with the image scorer as frozen feedback."""
    if len(batch) == 0:
        raise DataError("empty batch")
    g_w = models.g_w
    g_w.train()
    if cfg.warping_input == "generated":
        with torch.no_grad(), eval_mode(models.g_f):
            flow = models.g_f(batch.inputs)
    else:
        flow = batch.targets
    opt = optimizers["image_generator"]
    opt.zero_grad(set_to_none=True)
    terms = {}
    with frozen(models.scorer), eval_mode(models.scorer):
        warped = g_w(batch.neutral, flow)
        total = warping_total(warped, batch.target_faces, models.scorer(warped), batch.labels, cfg.weights,
                              models.extractor, terms)
        _check_loss(total, "image_generator", batch, step_id)
        total.backward()
    _guarded_step(opt, g_w, "image_generator", batch, step_id)
    out = {k: v.item() for k, v in terms.items()}
    out["total"] = total.item()
    return out


def train_step_scorer(batch: Batch, models: Models, opt, step_id=None) -> Dict[str, float]:
    models.scorer.train()
    opt.zero_grad(set_to_none=True)
    loss = expression_ce(models.scorer(batch.target_faces), batch.labels)
    _check_loss(loss, "expression_scorer", batch, step_id)
    loss.backward()
    _guarded_step(opt, models.scorer, "expression_scorer", batch, step_id)
    return {"ce": loss.item()}


# Runs ------------------------------------------------------------------------

class JsonlLog:
    def __init__(self, path: Optional[Path]):
        self.path = path
        self.records: List[dict] = []

    def write(self, record: dict):
        self.records.append(record)
        if self.path is not None:
            with open(self.path, "a") as fh:
                fh.write(json.dumps(record) + "\n")


@dataclass
class FoldRun:
    fold: int
    models: Models
    records: List[dict] = field(default_factory=list)
    checkpoint: Optional[Path] = None
    log_path: Optional[Path] = None
    train_ids: List[str] = field(default_factory=list)
    test_ids: List[str] = field(default_factory=list)


def _restore(models: Models, optimizers, payload):
    for name, module in models.trainable().items():
        module.load_state_dict(payload["models"][name])
    for name, opt in optimizers.items():
        if name in payload["optimizers"]:
            opt.load_state_dict(payload["optimizers"][name])


def _latest_checkpoint(ckpt_dir: Path) -> Optional[Path]:
    found = sorted(ckpt_dir.glob("epoch_*.pt"))
    return found[-1] if found else None


def train_fold(corpus: TensorCorpus, train_ids: Sequence[str], cfg: TrainConfig, fold: int = 0,
               out_dir=None, resume: bool = False, stop_after_epoch: Optional[int] = None,
               progress: Optional[Callable[[dict], None]] = None) -> FoldRun:
    """Train every network on ``train_ids``; checkpoint each ``checkpoint_every`` epochs."""
    if not train_ids:
        raise DataError(f"fold {fold} has no training samples")
    chash = config_hash(cfg)
    models = build_models(cfg)
    optimizers = build_optimizers(models, cfg)
    positions = corpus.positions(train_ids)
    fold_dir = Path(out_dir) / f"fold_{fold:02d}" if out_dir is not None else None
    ckpt_dir = fold_dir / "checkpoints" if fold_dir is not None else None
    log_path = fold_dir / "train_log.jsonl" if fold_dir is not None else None
    start_epoch = 0
    records: List[dict] = []

    if fold_dir is not None:
        ckpt_dir.mkdir(parents=True, exist_ok=True)
        latest = _latest_checkpoint(ckpt_dir) if resume else None
        if resume and latest is None:
            log.info("fold %d: nothing to resume, starting fresh", fold)
        if latest is not None:
            payload = load_checkpoint(latest, expected_hash=chash, expected_spec=cfg.nets)
            _restore(models, optimizers, payload)
            start_epoch = payload["epoch"] + 1
            if log_path.exists():
                with open(log_path) as fh:
                    records = [r for r in map(json.loads, fh) if r["epoch"] <= payload["epoch"]
                               or r["model"] == "expression_scorer"]
            log.info("fold %d: resumed from %s at epoch %d", fold, latest.name, start_epoch)
        elif log_path.exists():
            log_path.unlink()
        with open(log_path, "w") as fh:
            for r in records:
                fh.write(json.dumps(r) + "\n")
    tlog = JsonlLog(log_path)
    tlog.records = records

    if start_epoch == 0 and "expression_scorer" in optimizers and cfg.scorer.pretrain_epochs > 0:
        opt = optimizers["expression_scorer"]
        step = 0
        for ep in range(cfg.scorer.pretrain_epochs):
            for idx in epoch_batches(positions, cfg.batch_size, cfg.seed, ep, tag="scorer"):
                rec = train_step_scorer(corpus.batch(idx), models, opt, step)
                tlog.write({"model": "expression_scorer", "fold": fold, "epoch": ep, "step": step, **rec})
                step += 1
    models.scorer.eval()

    last = None
    for epoch in range(start_epoch, cfg.epochs):
        set_epoch_rates(optimizers, epoch, cfg)
        batches = epoch_batches(positions, cfg.batch_size, cfg.seed, epoch)
        for k, idx in enumerate(batches):
            step_id = epoch * len(batches) + k
            batch = corpus.batch(idx)
            rec_f = train_step_frontalization(batch, models, optimizers, cfg, epoch, step_id)
            rec_w = train_step_warping(batch, models, optimizers, cfg, step_id)
            for model, rec in (("frontalization", rec_f), ("warping", rec_w)):
                entry = {"model": model, "fold": fold, "epoch": epoch, "step": step_id, **rec}
                tlog.write(entry)
                if progress is not None:
                    progress(entry)
        if ckpt_dir is not None and ((epoch + 1) % cfg.checkpoint_every == 0 or epoch == cfg.epochs - 1):
            last = save_checkpoint(ckpt_dir / f"epoch_{epoch:03d}.pt", netspec=cfg.nets,
                                   models=models.trainable(), optimizers=optimizers, epoch=epoch,
                                   config_hash=chash, extra={"fold": fold, "train_ids": list(train_ids)})
        if stop_after_epoch is not None and epoch >= stop_after_epoch:
            break
    models.eval()
    models.fitted = True
    return FoldRun(fold, models, tlog.records, last, log_path, list(train_ids))


def run_training(samples: Sequence[PairedSample], folds: FoldSplit, cfg: TrainConfig, out_dir=None,
                 fold_indices: Optional[Sequence[int]] = None, resume: bool = False,
                 stop_after_epoch: Optional[int] = None, progress=None) -> Dict[int, FoldRun]:
    """Train one model set per fold on the union of the other folds (all datasets merged)."""
    corpus = samples if isinstance(samples, TensorCorpus) else TensorCorpus(samples, cfg.clip_threshold)
    missing = set(folds.assignment) - set(corpus.ids)
    if missing:
        raise DataError(f"fold split references {len(missing)} unknown sample id(s)")
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        dump_config(cfg, out_dir / "resolved_config.yaml")
        (out_dir / "folds.json").write_text(json.dumps(folds.to_dict()))
    runs = {}
    for fold in (range(folds.k) if fold_indices is None else fold_indices):
        run = train_fold(corpus, folds.train_ids(fold), cfg, fold, out_dir, resume, stop_after_epoch, progress)
        run.test_ids = folds.test_ids(fold)
        runs[fold] = run
    return runs


def load_models(checkpoint, cfg: TrainConfig, verify_hash: bool = True) -> Models:
    """Rebuild the networks from ``cfg`` and load a checkpoint into them."""
    payload = load_checkpoint(checkpoint, config_hash(cfg) if verify_hash else None, cfg.nets)
    models = build_models(cfg)
    for name, module in models.trainable().items():
        if name not in payload["models"]:
            raise CheckpointError(f"{checkpoint}: missing weights for {name}")
        module.load_state_dict(payload["models"][name])
    models.fitted = True
    return models.eval()
