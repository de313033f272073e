"""Image similarity metrics."""
from __future__ import annotations

import cv2
import numpy as np

from ..errors import DataError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _check(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DataError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    return a, b


def _blur(x):
    return cv2.GaussianBlur(x, (SSIM_WINDOW, SSIM_WINDOW), SSIM_SIGMA, borderType=cv2.BORDER_REFLECT)


def ssim(image_a, image_b, data_range: float = 1.0) -> float:
    """Gaussian-window SSIM averaged over channels, excluding the half-window border."""
    a, b = _check(image_a, image_b)
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    pad = (SSIM_WINDOW - 1) // 2
    values = []
    for ch in range(a.shape[-1]):
        x, y = a[..., ch], b[..., ch]
        mx, my = _blur(x), _blur(y)
        vx = _blur(x * x) - mx * mx
        vy = _blur(y * y) - my * my
        cxy = _blur(x * y) - mx * my
        s = ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
        values.append(s[pad:-pad, pad:-pad].mean())
    return float(np.mean(values))


def rmse(image_a, image_b) -> float:
    """Root mean squared difference on the 0-255 scale for inputs in [0, 1]."""
    a, b = _check(image_a, image_b)
    return float(np.sqrt(np.mean(((a - b) * 255.0) ** 2)))
