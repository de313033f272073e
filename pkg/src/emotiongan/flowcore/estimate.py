"""Dense flow estimation, flow resizing and face cropping."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Protocol, Sequence, Tuple

import cv2
import numpy as np

from ..errors import ConfigError, DataError
from .types import MODEL_SIZE, FaceFrame, FlowField

Box = Tuple[int, int, int, int]  # x, y, width, height


@dataclass(frozen=True)
class FlowParams:
    """Farneback settings plus the model-facing output size."""

    pyr_scale: float = 0.5
    levels: int = 3
    winsize: int = 15
    iterations: int = 3
    poly_n: int = 5
    poly_sigma: float = 1.1
    output_size: int = MODEL_SIZE

    def __post_init__(self):
        if not 0.0 < self.pyr_scale < 1.0:
            raise ConfigError("pyr_scale must be in (0, 1)")
        if self.levels < 1 or self.winsize < 3 or self.iterations < 1:
            raise ConfigError("levels, winsize and iterations must be positive")
        if self.poly_n not in (5, 7):
            raise ConfigError("poly_n must be 5 or 7")
        if self.output_size < 8:
            raise ConfigError("output_size too small")


def to_gray(pixels: np.ndarray) -> np.ndarray:
    px = np.asarray(pixels, dtype=np.float32)
    if px.ndim == 2:
        return px
    if px.ndim == 3 and px.shape[-1] == 1:
        return px[..., 0]
    if px.ndim == 3 and px.shape[-1] == 3:
        return cv2.cvtColor(px, cv2.COLOR_RGB2GRAY)
    raise DataError(f"cannot convert array of shape {px.shape} to grayscale")


def estimate_flow(gray_a: np.ndarray, gray_b: np.ndarray, params: FlowParams = FlowParams()) -> FlowField:
    """Farneback flow at the inputs' own resolution (pixels of that resolution)."""
    if gray_a.shape != gray_b.shape:
        raise DataError(f"frame dimensions differ: {gray_a.shape} vs {gray_b.shape}")
    a = np.ascontiguousarray(gray_a * 255.0, dtype=np.float32)
    b = np.ascontiguousarray(gray_b * 255.0, dtype=np.float32)
    flow = cv2.calcOpticalFlowFarneback(
        a, b, None, params.pyr_scale, params.levels, params.winsize,
        params.iterations, params.poly_n, params.poly_sigma, 0,
    )
    flow = np.nan_to_num(flow, nan=0.0, posinf=0.0, neginf=0.0)
    return FlowField(flow[..., 0], flow[..., 1])


def resize_flow(flow: FlowField, height: int, width: int) -> FlowField:
    """Resample a flow and rescale its vectors by the per-axis resize factor."""
    if (flow.height, flow.width) == (height, width):
        return flow
    sx = width / flow.width
    sy = height / flow.height
    interp = cv2.INTER_AREA if sx < 1 and sy < 1 else cv2.INTER_LINEAR
    u = cv2.resize(flow.u, (width, height), interpolation=interp) * sx
    v = cv2.resize(flow.v, (width, height), interpolation=interp) * sy
    return FlowField(u, v)


def resize_image(pixels: np.ndarray, size: int = MODEL_SIZE) -> np.ndarray:
    px = np.asarray(pixels, dtype=np.float32)
    if px.shape[0] == size and px.shape[1] == size:
        return px
    interp = cv2.INTER_AREA if px.shape[0] > size else cv2.INTER_LINEAR
    out = cv2.resize(px, (size, size), interpolation=interp)
    if out.ndim == 2:
        out = out[..., None]
    return np.clip(out, 0.0, 1.0)


def compute_flow(frame_a: FaceFrame, frame_b: FaceFrame, params: FlowParams = FlowParams()) -> FlowField:
    """Flow from ``frame_a`` to ``frame_b`` at source resolution, resized to the model size.

    ``frame_a(p) ≈ frame_b(p + flow(p))``.
    """
    if frame_a.pixels.shape != frame_b.pixels.shape:
        raise DataError(f"frame dimensions differ: {frame_a.pixels.shape} vs {frame_b.pixels.shape}")
    flow = estimate_flow(to_gray(frame_a.pixels), to_gray(frame_b.pixels), params)
    return resize_flow(flow, params.output_size, params.output_size)


def clip_threshold_from_flows(flows: Iterable[FlowField], quantile: float = 0.75) -> float:
    """Quantile (third quartile by default) of per-pixel magnitudes over a corpus."""
    mags = [f.magnitude().ravel() for f in flows]
    if not mags:
        raise DataError("no flows to estimate a clip threshold from")
    value = float(np.quantile(np.concatenate(mags), quantile))
    if value <= 0:
        raise DataError("corpus magnitudes are all zero; threshold would be nonpositive")
    return value


class FaceDetector(Protocol):
    def detect(self, pixels: np.ndarray) -> Optional[Box]:
        ...


class ManifestBoxes:
    """Detector fallback that serves boxes recorded in a manifest, by frame index."""

    def __init__(self, boxes: Sequence[Optional[Box]]):
        self.boxes = list(boxes)

    def box_for(self, index: int) -> Optional[Box]:
        if not self.boxes:
            return None
        if len(self.boxes) == 1:
            return self.boxes[0]
        return self.boxes[index]


class CascadeDetector:
    """OpenCV cascade detector; keeps the largest detection."""

    def __init__(self, cascade_path: str, scale_factor: float = 1.1, min_neighbors: int = 5):
        self._cascade = cv2.CascadeClassifier(cascade_path)
        if self._cascade.empty():
            raise ConfigError(f"could not load cascade from {cascade_path}")
        self.scale_factor = scale_factor
        self.min_neighbors = min_neighbors

    def detect(self, pixels: np.ndarray) -> Optional[Box]:
        gray = (to_gray(pixels) * 255).astype(np.uint8)
        found = self._cascade.detectMultiScale(gray, self.scale_factor, self.min_neighbors)
        if len(found) == 0:
            return None
        x, y, w, h = max(found, key=lambda b: b[2] * b[3])
        return int(x), int(y), int(w), int(h)


def enlarge_box(box: Box, factor: float, image_shape: Tuple[int, int]) -> Box:
    """Grow a box about its center by ``factor`` (0.25 → 25% wider/taller), square it, clamp."""
    x, y, w, h = box
    cx, cy = x + w / 2.0, y + h / 2.0
    side = max(w, h) * (1.0 + factor)
    H, W = image_shape
    side = min(side, W, H)
    x0 = int(round(min(max(cx - side / 2.0, 0), W - side)))
    y0 = int(round(min(max(cy - side / 2.0, 0), H - side)))
    s = int(round(side))
    return x0, y0, s, s


def crop_face(pixels: np.ndarray, box: Optional[Box], enlarge: float = 0.25) -> Tuple[np.ndarray, Box]:
    """Crop the enlarged face box; ``None`` means the whole image is the face."""
    H, W = pixels.shape[:2]
    if box is None:
        return pixels, (0, 0, W, H)
    x, y, w, h = enlarge_box(box, enlarge, (H, W))
    if w <= 0 or h <= 0:
        raise DataError(f"degenerate face box {box}")
    return pixels[y:y + h, x:x + w], (x, y, w, h)
