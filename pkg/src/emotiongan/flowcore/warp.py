"""Deterministic backward warping with bilinear sampling."""
from __future__ import annotations

import numpy as np

from ..errors import DataError
from .types import FaceFrame, FlowField


def bilinear_sample(pixels: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample ``pixels`` (H×W×C) at float coordinates, clamping to the border."""
    H, W = pixels.shape[:2]
    xs = np.clip(xs, 0.0, W - 1.0)
    ys = np.clip(ys, 0.0, H - 1.0)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    wx = (xs - x0)[..., None]
    wy = (ys - y0)[..., None]
    src = pixels.astype(np.float64)
    top = src[y0, x0] * (1.0 - wx) + src[y0, x1] * wx
    bottom = src[y1, x0] * (1.0 - wx) + src[y1, x1] * wx
    return top * (1.0 - wy) + bottom * wy


def dense_warp(image: FaceFrame, flow: FlowField) -> FaceFrame:
    """output(p) = image(p - flow(p)), bilinear, border-clamped."""
    if (image.height, image.width) != flow.shape:
        raise DataError(f"image {image.pixels.shape[:2]} and flow {flow.shape} sizes differ")
    ys, xs = np.mgrid[0:image.height, 0:image.width].astype(np.float64)
    out = bilinear_sample(image.pixels, xs - flow.u, ys - flow.v)
    return image.with_pixels(np.clip(out, 0.0, 1.0).astype(np.float32))
