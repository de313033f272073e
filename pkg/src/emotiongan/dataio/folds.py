"""Cross-validation fold construction."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np

from ..errors import DataError


@dataclass(frozen=True)
class FoldSplit:
    k: int
    assignment: Dict[str, int]
    seed: int

    def test_ids(self, fold: int) -> List[str]:
        return sorted(s for s, f in self.assignment.items() if f == fold)

    def train_ids(self, fold: int) -> List[str]:
        return sorted(s for s, f in self.assignment.items() if f != fold)

    def to_dict(self) -> dict:
        return {"k": self.k, "seed": self.seed, "assignment": dict(sorted(self.assignment.items()))}

    @classmethod
    def from_dict(cls, d: dict) -> "FoldSplit":
        return cls(int(d["k"]), {str(s): int(f) for s, f in d["assignment"].items()}, int(d["seed"]))


def make_folds(samples: Sequence, k: int = 10, seed: int = 0, subject_disjoint: bool = False) -> FoldSplit:
    """Partition samples into ``k`` folds, stratified by (dataset, expression).

    Samples need ``sample_id``, ``label``, ``dataset`` and ``subject_id``
    attributes. Groups are shuffled with ``seed`` and dealt round-robin with a
    single running counter so fold sizes differ by at most one. With
    ``subject_disjoint`` whole subjects (per dataset) are dealt instead.
    """
    if k < 2:
        raise DataError(f"k must be at least 2, got {k}")
    if len(samples) < k:
        raise DataError(f"cannot split {len(samples)} samples into {k} folds")
    ids = [s.sample_id for s in samples]
    if len(set(ids)) != len(ids):
        raise DataError("sample ids are not unique")
    rng = np.random.default_rng(seed)
    assignment: Dict[str, int] = {}
    if subject_disjoint:
        by_subject = defaultdict(list)
        for s in samples:
            by_subject[(s.dataset, s.subject_id)].append(s.sample_id)
        keys = sorted(by_subject)
        if len(keys) < k:
            raise DataError(f"subject-disjoint folds need at least {k} subjects, found {len(keys)}")
        order = rng.permutation(len(keys))
        for slot, idx in enumerate(order):
            for sid in by_subject[keys[idx]]:
                assignment[sid] = slot % k
    else:
        groups = defaultdict(list)
        for s in samples:
            groups[(s.dataset, int(s.label))].append(s.sample_id)
        counter = int(rng.integers(0, k))
        for key in sorted(groups):
            members = sorted(groups[key])
            for idx in rng.permutation(len(members)):
                assignment[members[idx]] = counter % k
                counter += 1
    return FoldSplit(k, assignment, seed)
