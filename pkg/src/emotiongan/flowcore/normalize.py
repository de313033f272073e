"""Clipping normalization between Cartesian flows and the polar network form."""
from __future__ import annotations

import numpy as np
import torch

from ..errors import ConfigError
from .types import FlowField, NormalizedFlow

DEFAULT_CLIP = 10.0


def _check_clip(clip_threshold) -> float:
    clip = float(clip_threshold)
    if not np.isfinite(clip) or clip <= 0:
        raise ConfigError(f"clip threshold must be positive, got {clip_threshold}")
    return clip


def clip_normalize(flow: FlowField, clip_threshold: float = DEFAULT_CLIP) -> NormalizedFlow:
    """magnitude = min(|f|, clip) / clip, direction = atan2(v, u) / pi.

    The zero vector gets direction 0 (``np.arctan2(0, 0) == 0``).
    """
    clip = _check_clip(clip_threshold)
    u = flow.u.astype(np.float64)
    v = flow.v.astype(np.float64)
    mag = np.minimum(np.hypot(u, v), clip) / clip
    # +0.0 avoids atan2(-0.0, -x) = -pi for vectors pointing exactly left
    direction = np.arctan2(v + 0.0, u) / np.pi
    return NormalizedFlow(mag, direction, clip)


def denormalize(nflow: NormalizedFlow) -> FlowField:
    r = nflow.magnitude * nflow.clip_threshold
    theta = np.pi * nflow.direction
    return FlowField(r * np.cos(theta), r * np.sin(theta))


def normalize_array(uv: np.ndarray, clip_threshold: float = DEFAULT_CLIP) -> np.ndarray:
    """Channels-first ``2×H×W`` float32 normalized array from an H×W×2 (u, v) array."""
    return clip_normalize(FlowField.from_array(uv), clip_threshold).to_array().astype(np.float32)


def denormalize_tensor(nflow: torch.Tensor, clip_threshold: float = DEFAULT_CLIP) -> torch.Tensor:
    """Differentiable denormalization of ``N×2×H×W`` (magnitude, direction) tensors to (u, v)."""
    clip = _check_clip(clip_threshold)
    r = nflow[:, 0] * clip
    theta = torch.pi * nflow[:, 1]
    return torch.stack([r * torch.cos(theta), r * torch.sin(theta)], dim=1)


def normalize_tensor(uv: torch.Tensor, clip_threshold: float = DEFAULT_CLIP) -> torch.Tensor:
    clip = _check_clip(clip_threshold)
    u, v = uv[:, 0], uv[:, 1]
    mag = torch.clamp(torch.hypot(u, v), max=clip) / clip
    return torch.stack([mag, torch.atan2(v + 0.0, u) / torch.pi], dim=1)
