"""Procedural toy datasets in the shape of the real ones (in memory or on disk)."""
from __future__ import annotations

from pathlib import Path
from typing import List, Optional

import numpy as np

from ..flowcore import ExpressionLabel, write_image
from .corpus import CorpusConfig, PairedSample, build_paired_samples, stable_seed
from .manifest import Sequence, dump_manifest
from .pairing import NEUTRAL_APEX
from .synthesis import random_identity, render_sequence, rotate_frame


def toy_sequences(n_sequences: int, n_frames: int = 4, size: int = 256, seed: int = 0,
                  dataset: str = "toy", intensity_range=(0.8, 1.2)) -> List[Sequence]:
    """Frontal-only sequences; sequence ``k`` shows subject ``k // 7`` performing expression ``k % 7``."""
    rng = np.random.default_rng(seed)
    identities = {}
    out = []
    for k in range(n_sequences):
        subj = f"{dataset}_s{k // 7:03d}"
        if subj not in identities:
            identities[subj] = random_identity(subj, rng)
        label = ExpressionLabel(k % 7)
        intensity = float(np.random.default_rng(stable_seed(seed, dataset, k)).uniform(*intensity_range))
        frames = render_sequence(identities[subj], label, n_frames, size, intensity)
        out.append(Sequence(seq_id=f"{subj}_{label.slug}", dataset=dataset, subject_id=subj,
                            expression=label, frames=frames))
    return out


def toy_paired_sequences(n_sequences: int, n_frames: int = 4, size: int = 256, seed: int = 0,
                         dataset: str = "toy_paired", max_rotation: float = 15.0,
                         static_fraction: float = 0.5) -> List[Sequence]:
    """Constrained/unconstrained twins; "nothing" pose sequences carry an unmoved head."""
    out = []
    for k, seq in enumerate(toy_sequences(n_sequences, n_frames, size, seed, dataset)):
        srng = np.random.default_rng(stable_seed(seed, dataset, seq.seq_id, "twin"))
        static = k < int(round(static_fraction * n_sequences))
        theta = 0.0 if static else float(srng.uniform(-max_rotation, max_rotation))
        cam1 = Sequence(seq_id=seq.seq_id + "_cam1", dataset=dataset, subject_id=seq.subject_id,
                        expression=seq.expression, pose_category="nothing" if static else "roll",
                        camera="constrained", frames=seq.frames)
        moved = []
        for i, fr in enumerate(seq.frames):
            angle = theta * i / (n_frames - 1)
            moved.append(fr.with_pixels(rotate_frame(fr.pixels, angle)))
        cam2 = Sequence(seq_id=seq.seq_id + "_cam2", dataset=dataset, subject_id=seq.subject_id,
                        expression=seq.expression, pose_category=cam1.pose_category,
                        camera="unconstrained", frames=moved, pair_id=cam1.seq_id)
        out += [cam1, cam2]
    return out


def write_sequences(out_dir, sequences: List[Sequence], dataset: Optional[str] = None) -> Path:
    """Write the frames as PNGs and a manifest describing them; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for seq in sequences:
        rel = []
        (out_dir / seq.seq_id).mkdir(parents=True, exist_ok=True)
        for i, fr in enumerate(seq.load_frames()):
            name = f"{seq.seq_id}/{i:03d}.png"
            write_image(out_dir / name, fr.pixels)
            rel.append(name)
        entry = {"id": seq.seq_id, "subject": seq.subject_id, "expression": seq.expression.slug,
                 "pose_category": seq.pose_category, "camera": seq.camera, "frames": rel}
        if seq.pair_id:
            entry["pair"] = seq.pair_id
        entries.append(entry)
    name = dataset or (sequences[0].dataset if sequences else "toy")
    size = sequences[0].load_frames()[0].width if sequences else None
    return dump_manifest(out_dir / "manifest.yaml", name, entries,
                         source_resolution=[size, size] if size else None)


def toy_corpus(n_samples: int = 200, seed: int = 0, size: int = 256, max_rotation: float = 20.0,
               noise_scale: float = 0.02, dataset: str = "toy") -> List[PairedSample]:
    """Neutral-apex corpus of ``n_samples`` frontal-only sequences pushed through synthetic rotation+noise."""
    from .corpus import SynthesisConfig

    cfg = CorpusConfig(strategies=(NEUTRAL_APEX,), seed=seed,
                       synthesis=SynthesisConfig(max_rotation=max_rotation, noise_scale=noise_scale))
    return build_paired_samples(toy_sequences(n_samples, n_frames=2, size=size, seed=seed, dataset=dataset), cfg)
