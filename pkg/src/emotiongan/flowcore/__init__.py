"""Optical-flow computation, normalization, warping, metrics and rendering."""
from .estimate import (
    CascadeDetector, FlowParams, ManifestBoxes, clip_threshold_from_flows, compute_flow, crop_face,
    enlarge_box, estimate_flow, resize_flow, resize_image, to_gray,
)
from .io import read_flo, read_image, write_flo, write_image
from .metrics import endpoint_errors, epe
from .normalize import (
    DEFAULT_CLIP, clip_normalize, denormalize, denormalize_tensor, normalize_array, normalize_tensor,
)
from .types import MODEL_SIZE, NUM_CLASSES, ExpressionLabel, FaceFrame, FlowField, NormalizedFlow
from .viz import flow_to_color, mosaic
from .warp import bilinear_sample, dense_warp

__all__ = [
    "CascadeDetector", "DEFAULT_CLIP", "ExpressionLabel", "FaceFrame", "FlowField", "FlowParams",
    "MODEL_SIZE", "ManifestBoxes", "NUM_CLASSES", "NormalizedFlow", "bilinear_sample",
    "clip_normalize", "clip_threshold_from_flows", "compute_flow", "crop_face", "dense_warp",
    "denormalize", "denormalize_tensor", "endpoint_errors", "enlarge_box", "epe", "estimate_flow",
    "flow_to_color", "mosaic", "normalize_array", "normalize_tensor", "read_flo", "read_image",
    "resize_flow", "resize_image", "to_gray", "write_flo", "write_image",
]
