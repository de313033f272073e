"""Paired-sample construction and the on-disk corpus cache."""
from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Sequence as Seq, Tuple

import numpy as np

from ..errors import DataError
from ..flowcore import (
    MODEL_SIZE, ExpressionLabel, FaceFrame, FlowField, FlowParams, compute_flow, crop_face, read_flo,
    read_image, resize_image, write_flo, write_image,
)
from .manifest import Sequence
from .pairing import FRAME_TO_FRAME, NEUTRAL_APEX, pair_indices
from .synthesis import synthesize_nonfrontal

log = logging.getLogger(__name__)


@dataclass(eq=False)
class PairedSample:
    sample_id: str
    input_flow: FlowField
    target_flow: FlowField
    neutral_face: FaceFrame
    target_face: FaceFrame
    label: ExpressionLabel
    subject_id: str
    pose_category: str
    pairing: str
    dataset: str = "default"
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.label = ExpressionLabel.parse(self.label)
        for name in ("input_flow", "target_flow"):
            f = getattr(self, name)
            if f.shape != (MODEL_SIZE, MODEL_SIZE):
                raise DataError(f"{self.sample_id}: {name} is {f.shape}, expected {MODEL_SIZE}×{MODEL_SIZE}")
        for name in ("neutral_face", "target_face"):
            img = getattr(self, name)
            if img.pixels.shape[:2] != (MODEL_SIZE, MODEL_SIZE):
                raise DataError(f"{self.sample_id}: {name} is {img.pixels.shape[:2]}")
        if self.neutral_face.subject_id != self.target_face.subject_id:
            raise DataError(f"{self.sample_id}: neutral and target faces belong to different subjects")


@dataclass(frozen=True)
class SynthesisConfig:
    max_rotation: float = 20.0
    noise_scale: float = 0.02
    # "trajectory": one angle per sequence, ramped from 0 at frame 0 to the full angle at the last frame;
    # "independent": every frame draws its own angle
    pose_mode: str = "trajectory"


@dataclass(frozen=True)
class CorpusConfig:
    strategies: Tuple[str, ...] = (NEUTRAL_APEX, FRAME_TO_FRAME)
    flow: FlowParams = FlowParams()
    synthesis: SynthesisConfig = SynthesisConfig()
    crop_enlarge: float = 0.25
    min_motion: float = 0.1
    seed: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["strategies"] = list(self.strategies)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusConfig":
        d = dict(d)
        flow = FlowParams(**d.pop("flow", {}))
        synth = SynthesisConfig(**d.pop("synthesis", {}))
        strategies = tuple(d.pop("strategies", cls.strategies))
        return cls(strategies=strategies, flow=flow, synthesis=synth, **d)


def stable_seed(*parts) -> int:
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "little") & (2**63 - 1)


def _face(frame: FaceFrame, box, enlarge: float) -> Tuple[np.ndarray, tuple]:
    return crop_face(frame.pixels, box if box is not None else frame.crop_box, enlarge)


def _model_face(pixels: np.ndarray, frame: FaceFrame, box, expression) -> FaceFrame:
    px = resize_image(pixels, MODEL_SIZE)
    if px.shape[-1] == 1:
        px = np.repeat(px, 3, axis=-1)
    return FaceFrame(px, subject_id=frame.subject_id, expression=expression, crop_box=box)


def _pair_flow(frames: List[FaceFrame], i: int, j: int, box, cfg: CorpusConfig) -> FlowField:
    a, bx = _face(frames[i], box, cfg.crop_enlarge)
    b, _ = crop_face(frames[j].pixels, bx, 0.0)
    return compute_flow(FaceFrame(a), FaceFrame(b), cfg.flow)


def _synthesized(seq: Sequence, frames: List[FaceFrame], cfg: CorpusConfig) -> Tuple[List[FaceFrame], List[float]]:
    s = cfg.synthesis
    n = len(frames)
    rng = np.random.default_rng(stable_seed(cfg.seed, seq.dataset, seq.seq_id, "pose"))
    theta = float(rng.uniform(-s.max_rotation, s.max_rotation)) if s.max_rotation > 0 else 0.0
    out, angles = [], []
    for k, fr in enumerate(frames):
        frame_seed = stable_seed(cfg.seed, seq.dataset, seq.seq_id, k)
        if s.pose_mode == "trajectory":
            angle = theta * k / (n - 1) if n > 1 else theta
            nf = synthesize_nonfrontal(fr, s.max_rotation, s.noise_scale, frame_seed, angle=angle)
        elif s.pose_mode == "independent":
            nf = synthesize_nonfrontal(fr, s.max_rotation, s.noise_scale, frame_seed)
        else:
            raise DataError(f"unknown pose_mode {s.pose_mode!r}")
        out.append(nf)
        angles.append(nf.meta["rotation_deg"])
    return out, angles


def _samples_for(frontal: Sequence, nonfrontal: Optional[Sequence], cfg: CorpusConfig) -> List[PairedSample]:
    frames = frontal.load_frames()
    if nonfrontal is None:
        moved, angles = _synthesized(frontal, frames, cfg)
        moved_seq, pose, source = frontal, ("roll" if cfg.synthesis.max_rotation > 0 else "nothing"), "synthetic"
    else:
        moved = nonfrontal.load_frames()
        if len(moved) != len(frames):
            raise DataError(f"paired sequences {frontal.seq_id} ({len(frames)} frames) and "
                            f"{nonfrontal.seq_id} ({len(moved)} frames) are not aligned")
        angles, moved_seq, pose, source = None, nonfrontal, nonfrontal.pose_category, "paired"

    samples = []
    for strategy, (i, j) in pair_indices(frames, cfg.strategies):
        box_f = frontal.box_for(i)
        target_flow = _pair_flow(frames, i, j, box_f, cfg)
        if strategy == FRAME_TO_FRAME and float(target_flow.magnitude().mean()) < cfg.min_motion:
            log.debug("%s frames %d-%d dropped: mean motion below %.2f px", frontal.seq_id, i, j, cfg.min_motion)
            continue
        input_flow = _pair_flow(moved, i, j, moved_seq.box_for(i), cfg)
        src_i, box_i = _face(frames[i], box_f, cfg.crop_enlarge)
        src_j, _ = crop_face(frames[j].pixels, box_i, 0.0)
        neutral_expr = ExpressionLabel.NEUTRAL if i == 0 else frontal.expression
        prov = {"frontal_seq": frontal.seq_id, "frames": [i, j], "source": source, "crop_box": list(box_i)}
        if nonfrontal is not None:
            prov["nonfrontal_seq"] = nonfrontal.seq_id
        if angles is not None:
            prov["rotation_deg"] = [angles[i], angles[j]]
        samples.append(PairedSample(
            sample_id=f"{frontal.dataset}/{frontal.seq_id}/{strategy}/{i:03d}-{j:03d}",
            input_flow=input_flow, target_flow=target_flow,
            neutral_face=_model_face(src_i, frames[i], box_i, neutral_expr),
            target_face=_model_face(src_j, frames[j], box_i, frontal.expression),
            label=frontal.expression, subject_id=frontal.subject_id, pose_category=pose,
            pairing=strategy, dataset=frontal.dataset, provenance=prov,
        ))
    return samples


def _route(sequences: Seq[Sequence]) -> List[Tuple[Sequence, Optional[Sequence]]]:
    by_id = {s.seq_id: s for s in sequences}
    twins = {s.pair_id for s in sequences if s.camera == "unconstrained" and s.pair_id}
    jobs = []
    for s in sequences:
        if s.camera == "unconstrained":
            if s.pair_id not in by_id:
                raise DataError(f"{s.seq_id}: paired sequence {s.pair_id!r} missing")
            jobs.append((by_id[s.pair_id], s))
        elif s.seq_id not in twins:
            jobs.append((s, None))
    return jobs


def _run_job(args):
    frontal, nonfrontal, cfg = args
    try:
        return _samples_for(frontal, nonfrontal, cfg), None
    except DataError as exc:
        return [], (nonfrontal or frontal).seq_id, str(exc)


def build_paired_samples(sequences: Iterable[Sequence], cfg: CorpusConfig = CorpusConfig(),
                         errors: Optional[list] = None, workers: int = 1) -> List[PairedSample]:
    """Turn sequences into PairedSamples, sorted by ``sample_id``.

    Unconstrained sequences are paired with their constrained twin frame by
    frame; sequences with no twin are treated as frontal-only and their
    non-frontal stream is synthesized. Rejected sequences are logged and, if
    ``errors`` is given, appended to it as ``(seq_id, message)``.
    """
    jobs = [(f, n, cfg) for f, n in _route(list(sequences))]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_run_job, jobs))
    else:
        results = [_run_job(j) for j in jobs]
    samples = []
    for res in results:
        if res[1] is not None:
            _, seq_id, msg = res
            log.warning("sequence %s rejected: %s", seq_id, msg)
            if errors is not None:
                errors.append((seq_id, msg))
            continue
        samples.extend(res[0])
    return sorted(samples, key=lambda s: s.sample_id)


# Cache -----------------------------------------------------------------------

INDEX_NAME = "index.jsonl"
KEY_NAME = "cache_key"


def artifact_stem(cache_key: str, sample_id: str) -> str:
    return hashlib.sha1(f"{cache_key}|{sample_id}".encode()).hexdigest()[:20]


def write_corpus(samples: Seq[PairedSample], cache_dir, cache_key: str = "") -> Path:
    """Write flows (.flo), faces (PNG) and a JSON-lines index. Artifacts are hash-named and write-once."""
    cache_dir = Path(cache_dir)
    (cache_dir / "flows").mkdir(parents=True, exist_ok=True)
    (cache_dir / "faces").mkdir(parents=True, exist_ok=True)
    records = []
    for s in samples:
        stem = artifact_stem(cache_key, s.sample_id)
        files = {
            "input_flow": f"flows/{stem}_input.flo", "target_flow": f"flows/{stem}_target.flo",
            "neutral_face": f"faces/{stem}_neutral.png", "target_face": f"faces/{stem}_target.png",
        }
        for key, rel in files.items():
            dest = cache_dir / rel
            if dest.exists():
                continue
            obj = getattr(s, key)
            if isinstance(obj, FlowField):
                write_flo(dest, obj)
            else:
                write_image(dest, obj.pixels)
        records.append({
            "sample_id": s.sample_id, "dataset": s.dataset, "subject_id": s.subject_id,
            "label": s.label.slug, "pose_category": s.pose_category, "pairing": s.pairing,
            "files": files, "provenance": s.provenance,
        })
    tmp = cache_dir / f"{INDEX_NAME}.tmp{os.getpid()}"
    with open(tmp, "w") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    os.replace(tmp, cache_dir / INDEX_NAME)
    (cache_dir / KEY_NAME).write_text(cache_key)
    return cache_dir / INDEX_NAME


def load_corpus(cache_dir) -> List[PairedSample]:
    cache_dir = Path(cache_dir)
    index = cache_dir / INDEX_NAME
    if not index.exists():
        raise DataError(f"no corpus index at {index}")
    samples = []
    with open(index) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                r = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{index}: line {lineno}: {exc}") from None
            f = r["files"]
            label = ExpressionLabel.parse(r["label"])
            neutral_expr = ExpressionLabel.NEUTRAL if r["provenance"].get("frames", [0])[0] == 0 else label
            samples.append(PairedSample(
                sample_id=r["sample_id"],
                input_flow=read_flo(cache_dir / f["input_flow"]),
                target_flow=read_flo(cache_dir / f["target_flow"]),
                neutral_face=FaceFrame(read_image(cache_dir / f["neutral_face"]), subject_id=r["subject_id"],
                                       expression=neutral_expr),
                target_face=FaceFrame(read_image(cache_dir / f["target_face"]), subject_id=r["subject_id"],
                                      expression=label),
                label=label, subject_id=r["subject_id"], pose_category=r["pose_category"],
                pairing=r["pairing"], dataset=r["dataset"], provenance=r["provenance"],
            ))
    return samples


def cache_key_for(manifests: Seq, cfg: CorpusConfig) -> str:
    """Hash of manifest contents, referenced-file stats and corpus config."""
    from .manifest import load_dataset

    h = hashlib.sha256(json.dumps(cfg.to_dict(), sort_keys=True).encode())
    for m in manifests:
        m = Path(m)
        h.update(m.read_bytes())
        try:
            ds = load_dataset(m)
        except DataError:
            continue
        for seq in ds.sequences:
            for p in seq.frame_paths:
                st = p.stat()
                h.update(f"{p}:{st.st_size}:{st.st_mtime_ns}".encode())
    return h.hexdigest()[:32]
