"""Core value types: flow fields, normalized flows, face frames, labels."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from ..errors import DataError

MODEL_SIZE = 128


class ExpressionLabel(enum.IntEnum):
    """The seven expression classes; the integer value is the class index."""

    DISGUST = 0
    HAPPINESS = 1
    ANGER = 2
    SURPRISE = 3
    NEUTRAL = 4
    FEAR = 5
    SADNESS = 6

    @classmethod
    def parse(cls, value) -> "ExpressionLabel":
        if isinstance(value, cls):
            return value
        if isinstance(value, (int, np.integer)):
            try:
                return cls(int(value))
            except ValueError:
                raise DataError(f"expression index out of range: {value}") from None
        try:
            return cls[str(value).strip().upper()]
        except KeyError:
            names = ", ".join(e.name.lower() for e in cls)
            raise DataError(f"unknown expression {value!r}; expected one of {names}") from None

    @property
    def slug(self) -> str:
        return self.name.lower()


NUM_CLASSES = len(ExpressionLabel)


@dataclass(frozen=True, eq=False)
class FlowField:
    """Dense displacement field in pixels, stored as two H×W float arrays."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float32)
        v = np.asarray(self.v, dtype=np.float32)
        if u.ndim != 2 or u.shape != v.shape:
            raise DataError(f"flow components must be 2-D with equal shapes, got {u.shape} and {v.shape}")
        if not (np.isfinite(u).all() and np.isfinite(v).all()):
            raise DataError("flow field contains NaN or Inf")
        u.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @classmethod
    def from_array(cls, uv: np.ndarray) -> "FlowField":
        uv = np.asarray(uv)
        if uv.ndim != 3 or uv.shape[-1] != 2:
            raise DataError(f"expected H×W×2 flow array, got {uv.shape}")
        return cls(uv[..., 0], uv[..., 1])

    @classmethod
    def zeros(cls, height: int, width: int) -> "FlowField":
        z = np.zeros((height, width), np.float32)
        return cls(z, z)

    @property
    def height(self) -> int:
        return self.u.shape[0]

    @property
    def width(self) -> int:
        return self.u.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.u.shape

    def to_array(self) -> np.ndarray:
        return np.stack([self.u, self.v], axis=-1)

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.u, self.v)


@dataclass(frozen=True, eq=False)
class NormalizedFlow:
    """Network-facing polar form of a flow.

    ``magnitude`` is the clipped length divided by ``clip_threshold`` and
    ``direction`` is ``atan2(v, u) / pi``.
    """

    magnitude: np.ndarray
    direction: np.ndarray
    clip_threshold: float

    def __post_init__(self):
        m = np.asarray(self.magnitude, dtype=np.float64)
        d = np.asarray(self.direction, dtype=np.float64)
        if m.shape != d.shape or m.ndim != 2:
            raise DataError(f"magnitude/direction shapes differ: {m.shape} vs {d.shape}")
        if not self.clip_threshold > 0:
            raise DataError(f"clip_threshold must be positive, got {self.clip_threshold}")
        if not (np.isfinite(m).all() and np.isfinite(d).all()):
            raise DataError("normalized flow contains NaN or Inf")
        if m.min(initial=0.0) < 0.0 or m.max(initial=0.0) > 1.0:
            raise DataError("normalized magnitude outside [0, 1]")
        if d.min(initial=0.0) < -1.0 or d.max(initial=0.0) > 1.0:
            raise DataError("normalized direction outside [-1, 1]")
        m.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "magnitude", m)
        object.__setattr__(self, "direction", d)
        object.__setattr__(self, "clip_threshold", float(self.clip_threshold))

    def to_array(self) -> np.ndarray:
        """Channels-first ``2×H×W`` array (magnitude, direction)."""
        return np.stack([self.magnitude, self.direction], axis=0)

    @classmethod
    def from_array(cls, arr: np.ndarray, clip_threshold: float) -> "NormalizedFlow":
        arr = np.asarray(arr, dtype=np.float32)
        if arr.ndim != 3 or arr.shape[0] != 2:
            raise DataError(f"expected 2×H×W normalized flow, got {arr.shape}")
        return cls(arr[0], arr[1], clip_threshold)


@dataclass(frozen=True, eq=False)
class FaceFrame:
    """A face image with values in [0, 1], H×W×C with C in {1, 3}."""

    pixels: np.ndarray
    subject_id: Optional[str] = None
    expression: Optional[ExpressionLabel] = None
    crop_box: Optional[Tuple[int, int, int, int]] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float32)
        if px.ndim == 2:
            px = px[..., None]
        if px.ndim != 3 or px.shape[-1] not in (1, 3):
            raise DataError(f"face pixels must be H×W×C with C in (1, 3), got {px.shape}")
        if not np.isfinite(px).all():
            raise DataError("face pixels contain NaN or Inf")
        if px.min(initial=0.0) < 0.0 or px.max(initial=0.0) > 1.0:
            raise DataError("face pixels outside [0, 1]")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)
        if self.expression is not None:
            object.__setattr__(self, "expression", ExpressionLabel.parse(self.expression))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    def with_pixels(self, pixels: np.ndarray, **changes) -> "FaceFrame":
        kw = dict(subject_id=self.subject_id, expression=self.expression,
                  crop_box=self.crop_box, meta=dict(self.meta))
        kw.update(changes)
        return FaceFrame(pixels, **kw)
