"""Flow-field metrics."""
from __future__ import annotations

import numpy as np

from ..errors import DataError
from .types import FlowField


def endpoint_errors(a: FlowField, b: FlowField) -> np.ndarray:
    if a.shape != b.shape:
        raise DataError(f"flow sizes differ: {a.shape} vs {b.shape}")
    du = a.u.astype(np.float64) - b.u
    dv = a.v.astype(np.float64) - b.v
    return np.hypot(du, dv)


def epe(a: FlowField, b: FlowField) -> float:
    """Mean per-pixel Euclidean distance between two flows."""
    return float(endpoint_errors(a, b).mean())
