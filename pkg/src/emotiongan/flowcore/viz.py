"""Flow rendering and figure mosaics."""
from __future__ import annotations

from typing import Optional, Sequence

import cv2
import numpy as np

from .types import FaceFrame, FlowField


def flow_to_color(flow: FlowField, max_magnitude: Optional[float] = None) -> FaceFrame:
    """HSV rendering: hue from direction, saturation from magnitude / field max, full value.

    Zero flow renders white.
    """
    mag = flow.magnitude()
    scale = float(mag.max()) if max_magnitude is None else float(max_magnitude)
    sat = np.zeros_like(mag) if scale <= 0 else np.clip(mag / scale, 0.0, 1.0)
    hue = (np.degrees(np.arctan2(flow.v + 0.0, flow.u)) + 360.0) % 360.0
    hsv = np.stack([hue, sat, np.ones_like(mag)], axis=-1).astype(np.float32)
    rgb = cv2.cvtColor(hsv, cv2.COLOR_HSV2RGB)
    return FaceFrame(np.clip(rgb, 0.0, 1.0))


def mosaic(rows: Sequence[Sequence[np.ndarray]], pad: int = 2) -> np.ndarray:
    """Tile equally sized H×W×3 panels into a grid with white padding."""
    if not rows:
        raise ValueError("empty mosaic")
    h, w = rows[0][0].shape[:2]
    ncols = max(len(r) for r in rows)
    out = np.ones((len(rows) * (h + pad) + pad, ncols * (w + pad) + pad, 3), np.float32)
    for i, row in enumerate(rows):
        for j, panel in enumerate(row):
            p = np.asarray(panel, np.float32)
            if p.shape[-1] == 1:
                p = np.repeat(p, 3, axis=-1)
            y, x = pad + i * (h + pad), pad + j * (w + pad)
            out[y:y + h, x:x + w] = p
    return out
