"""Frame-pairing strategies over expression sequences."""
from __future__ import annotations

import logging
from typing import List, Sequence, Tuple

log = logging.getLogger(__name__)

NEUTRAL_APEX = "neutral-apex"
FRAME_TO_FRAME = "frame-to-frame"
STRATEGIES = (NEUTRAL_APEX, FRAME_TO_FRAME)


def pair_neutral_apex(sequence: Sequence) -> List[Tuple[int, int]]:
    """One (first, last) index pair per sequence."""
    n = len(sequence)
    if n < 2:
        log.warning("sequence of length %d skipped: need at least 2 frames", n)
        return []
    return [(0, n - 1)]


def pair_frame_to_frame(sequence: Sequence) -> List[Tuple[int, int]]:
    """Every consecutive (i, i + 1) index pair."""
    n = len(sequence)
    if n < 2:
        log.warning("sequence of length %d skipped: need at least 2 frames", n)
        return []
    return [(i, i + 1) for i in range(n - 1)]


def pair_indices(sequence: Sequence, strategies: Sequence[str]) -> List[Tuple[str, Tuple[int, int]]]:
    out = []
    for name in strategies:
        if name == NEUTRAL_APEX:
            out += [(name, p) for p in pair_neutral_apex(sequence)]
        elif name == FRAME_TO_FRAME:
            out += [(name, p) for p in pair_frame_to_frame(sequence)]
        else:
            raise ValueError(f"unknown pairing strategy {name!r}; expected one of {STRATEGIES}")
    return out
