"""Synthetic non-frontal frames and a procedural toy face-sequence generator.

The toy generator stands in for licensed expression datasets: each subject is
a textured cartoon face and each expression is a fixed pattern of local
displacements (brows, eyes, mouth) ramped from the neutral first frame to the
apex last frame.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import cv2
import numpy as np

from ..flowcore import ExpressionLabel, FaceFrame, FlowField
from ..flowcore.warp import dense_warp


def rotation_matrix(angle_deg: float, height: int, width: int) -> np.ndarray:
    """2×3 affine rotating by ``angle_deg`` (counter-clockwise on screen) about the image center."""
    center = ((width - 1) / 2.0, (height - 1) / 2.0)
    return cv2.getRotationMatrix2D(center, angle_deg, 1.0)


def rotate_frame(pixels: np.ndarray, angle_deg: float) -> np.ndarray:
    H, W = pixels.shape[:2]
    if angle_deg == 0.0:
        return np.array(pixels, dtype=np.float32)
    out = cv2.warpAffine(np.asarray(pixels, np.float32), rotation_matrix(angle_deg, H, W), (W, H),
                         flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_REFLECT101)
    return out.reshape(pixels.shape)


def synthesize_nonfrontal(frame: FaceFrame, max_rotation: float = 20.0, noise_scale: float = 0.02,
                          seed: int = 0, angle: Optional[float] = None) -> FaceFrame:
    """In-plane rotation about the center plus zero-mean Gaussian noise (std ``noise_scale``).

    The angle is drawn from U[-max_rotation, max_rotation] unless given explicitly.
    """
    if max_rotation < 0:
        raise ValueError("max_rotation must be nonnegative")
    rng = np.random.default_rng(seed)
    drawn = float(rng.uniform(-max_rotation, max_rotation)) if max_rotation > 0 else 0.0
    theta = drawn if angle is None else float(angle)
    px = rotate_frame(frame.pixels, theta)
    if noise_scale > 0:
        px = px + rng.normal(0.0, noise_scale, size=px.shape).astype(np.float32)
    meta = dict(frame.meta, rotation_deg=theta, noise_scale=noise_scale)
    return frame.with_pixels(np.clip(px, 0.0, 1.0), meta=meta)


# Toy faces -----------------------------------------------------------------

# landmark anchors in unit face coordinates (x right, y down, face spans [-1, 1])
_ANCHORS = {
    "brow_l_in": (-0.18, -0.42), "brow_l_out": (-0.55, -0.45),
    "brow_r_in": (0.18, -0.42), "brow_r_out": (0.55, -0.45),
    "eye_l": (-0.36, -0.22), "eye_r": (0.36, -0.22),
    "nose": (0.0, 0.10),
    "lip_up": (0.0, 0.40), "lip_low": (0.0, 0.62),
    "corner_l": (-0.32, 0.50), "corner_r": (0.32, 0.50),
}

# per-expression anchor displacements in unit face coordinates
_MOTIONS: Dict[ExpressionLabel, Dict[str, Tuple[float, float]]] = {
    ExpressionLabel.NEUTRAL: {},
    ExpressionLabel.HAPPINESS: {"corner_l": (-0.10, -0.12), "corner_r": (0.10, -0.12),
                                "eye_l": (0.0, -0.03), "eye_r": (0.0, -0.03)},
    ExpressionLabel.SURPRISE: {"brow_l_in": (0.0, -0.12), "brow_l_out": (0.0, -0.12),
                               "brow_r_in": (0.0, -0.12), "brow_r_out": (0.0, -0.12),
                               "lip_low": (0.0, 0.16)},
    ExpressionLabel.SADNESS: {"corner_l": (0.0, 0.11), "corner_r": (0.0, 0.11),
                              "brow_l_in": (0.0, -0.08), "brow_r_in": (0.0, -0.08)},
    ExpressionLabel.ANGER: {"brow_l_in": (0.07, 0.09), "brow_r_in": (-0.07, 0.09),
                            "brow_l_out": (0.03, 0.04), "brow_r_out": (-0.03, 0.04),
                            "lip_up": (0.0, 0.04), "lip_low": (0.0, -0.05)},
    ExpressionLabel.DISGUST: {"nose": (0.0, -0.08), "lip_up": (0.0, -0.11),
                              "corner_l": (0.04, -0.03), "corner_r": (-0.04, -0.03)},
    ExpressionLabel.FEAR: {"corner_l": (-0.13, 0.03), "corner_r": (0.13, 0.03),
                           "brow_l_in": (0.04, -0.08), "brow_r_in": (-0.04, -0.08)},
}


@dataclass(frozen=True)
class ToyIdentity:
    subject_id: str
    center: Tuple[float, float]
    radii: Tuple[float, float]
    skin: Tuple[float, float, float]
    feature_scale: float
    texture_seed: int


def random_identity(subject_id: str, rng: np.random.Generator) -> ToyIdentity:
    return ToyIdentity(
        subject_id=subject_id,
        center=(float(rng.uniform(-0.04, 0.04)), float(rng.uniform(-0.04, 0.04))),
        radii=(float(rng.uniform(0.58, 0.66)), float(rng.uniform(0.72, 0.80))),
        skin=tuple(float(c) for c in rng.uniform([0.55, 0.40, 0.30], [0.90, 0.75, 0.65])),
        feature_scale=float(rng.uniform(0.9, 1.1)),
        texture_seed=int(rng.integers(0, 2**31 - 1)),
    )


def _smooth_noise(size: int, cells: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.random((cells, cells)).astype(np.float32)
    return cv2.resize(z, (size, size), interpolation=cv2.INTER_CUBIC)


def _face_coords(identity: ToyIdentity, size: int):
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float32)
    cx = (0.5 + 0.5 * identity.center[0]) * (size - 1)
    cy = (0.5 + 0.5 * identity.center[1]) * (size - 1)
    rx = identity.radii[0] * (size - 1) / 2.0
    ry = identity.radii[1] * (size - 1) / 2.0
    return (xs - cx) / rx, (ys - cy) / ry, (cx, cy, rx, ry)


def render_neutral(identity: ToyIdentity, size: int = 256) -> np.ndarray:
    """Render the neutral frontal face of ``identity`` as an RGB array in [0, 1]."""
    rng = np.random.default_rng(identity.texture_seed)
    fx, fy, _ = _face_coords(identity, size)
    background = 0.25 + 0.5 * _smooth_noise(size, 24, rng)
    img = np.repeat(background[..., None], 3, axis=2) * np.array([0.6, 0.7, 0.8], np.float32)

    inside = (fx ** 2 + fy ** 2) <= 1.0
    texture = 0.85 + 0.3 * _smooth_noise(size, 40, rng)
    skin = np.asarray(identity.skin, np.float32)[None, None] * texture[..., None]
    img = np.where(inside[..., None], skin, img)

    s = identity.feature_scale

    def blob(name, rx, ry, color, strength=1.0):
        ax, ay = _ANCHORS[name]
        d = ((fx - ax * s) / (rx * s)) ** 2 + ((fy - ay * s) / (ry * s)) ** 2
        w = np.clip(1.5 - d, 0.0, 1.0)[..., None] * strength
        return w, np.asarray(color, np.float32)

    dark = (0.12, 0.08, 0.08)
    features = [
        blob("eye_l", 0.13, 0.07, dark), blob("eye_r", 0.13, 0.07, dark),
        blob("brow_l_in", 0.12, 0.035, dark), blob("brow_l_out", 0.12, 0.035, dark),
        blob("brow_r_in", 0.12, 0.035, dark), blob("brow_r_out", 0.12, 0.035, dark),
        blob("nose", 0.07, 0.10, (0.45, 0.28, 0.22), 0.7),
        blob("lip_up", 0.28, 0.05, (0.55, 0.12, 0.15)), blob("lip_low", 0.26, 0.06, (0.55, 0.12, 0.15)),
        blob("corner_l", 0.06, 0.05, (0.35, 0.08, 0.10)), blob("corner_r", 0.06, 0.05, (0.35, 0.08, 0.10)),
    ]
    for w, color in features:
        img = img * (1.0 - w) + color[None, None] * w
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def expression_flow(identity: ToyIdentity, expression: ExpressionLabel, size: int = 256,
                    intensity: float = 1.0) -> FlowField:
    """Displacement field (pixels at ``size``) moving facial features for ``expression``."""
    fx, fy, (_, _, rx, ry) = _face_coords(identity, size)
    u = np.zeros((size, size), np.float64)
    v = np.zeros((size, size), np.float64)
    s = identity.feature_scale
    sigma = 0.16 * s
    for name, (dx, dy) in _MOTIONS[ExpressionLabel.parse(expression)].items():
        ax, ay = _ANCHORS[name]
        w = np.exp(-(((fx - ax * s) ** 2) + ((fy - ay * s) ** 2)) / (2 * sigma ** 2))
        u += intensity * dx * rx * w
        v += intensity * dy * ry * w
    return FlowField(u, v)


def render_sequence(identity: ToyIdentity, expression, n_frames: int = 4, size: int = 256,
                    intensity: float = 1.0) -> List[FaceFrame]:
    """Frames ramping linearly from neutral (frame 0) to apex (last frame)."""
    label = ExpressionLabel.parse(expression)
    base = FaceFrame(render_neutral(identity, size), subject_id=identity.subject_id, expression=label)
    frames = []
    for k in range(n_frames):
        t = k / (n_frames - 1) if n_frames > 1 else 1.0
        field = expression_flow(identity, label, size, intensity * t)
        frames.append(base if t == 0 else dense_warp(base, field))
    return frames
