"""Middlebury ``.flo`` and PNG readers/writers."""
from __future__ import annotations

import os
from pathlib import Path

import cv2
import numpy as np

from ..errors import DataError
from .types import FlowField

FLO_MAGIC = b"PIEH"


def write_flo(path, flow: FlowField) -> None:
    """Write ``flow`` as Middlebury .flo: magic, int32 width, int32 height, interleaved float32 (u, v)."""
    path = Path(path)
    data = np.empty((flow.height, flow.width, 2), dtype="<f4")
    data[..., 0] = flow.u
    data[..., 1] = flow.v
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    with open(tmp, "wb") as fh:
        fh.write(FLO_MAGIC)
        fh.write(np.array([flow.width, flow.height], dtype="<i4").tobytes())
        fh.write(data.tobytes())
    os.replace(tmp, path)


def read_flo(path) -> FlowField:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != FLO_MAGIC:
            raise DataError(f"{path}: not a .flo file (magic {magic!r})")
        header = np.frombuffer(fh.read(8), dtype="<i4")
        if header.size != 2 or (header <= 0).any():
            raise DataError(f"{path}: bad .flo header")
        width, height = int(header[0]), int(header[1])
        payload = np.frombuffer(fh.read(), dtype="<f4")
    if payload.size != width * height * 2:
        raise DataError(f"{path}: expected {width * height * 2} floats, found {payload.size}")
    data = payload.reshape(height, width, 2)
    return FlowField(data[..., 0].astype(np.float32), data[..., 1].astype(np.float32))


def read_image(path) -> np.ndarray:
    """Read an image as float32 RGB (or single channel) in [0, 1]."""
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise DataError(f"cannot read image {path}")
    if raw.dtype == np.uint16:
        px = raw.astype(np.float32) / 65535.0
    else:
        px = raw.astype(np.float32) / 255.0
    if px.ndim == 3 and px.shape[-1] == 4:
        px = px[..., :3]
    if px.ndim == 3:
        px = cv2.cvtColor(px, cv2.COLOR_BGR2RGB)
    else:
        px = px[..., None]
    return px


def write_image(path, pixels: np.ndarray) -> None:
    px = np.clip(np.asarray(pixels, dtype=np.float32), 0.0, 1.0)
    if px.ndim == 3 and px.shape[-1] == 1:
        px = px[..., 0]
    out = np.round(px * 255.0).astype(np.uint8)
    if out.ndim == 3:
        out = cv2.cvtColor(out, cv2.COLOR_RGB2BGR)
    path = Path(path)
    tmp = path.with_name(path.stem + f".tmp{os.getpid()}" + path.suffix)
    if not cv2.imwrite(str(tmp), out):
        raise DataError(f"cannot write image {path}")
    os.replace(tmp, path)
