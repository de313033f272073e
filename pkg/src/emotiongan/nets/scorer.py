"""Pluggable image expression scorer (7-way logits from a face image)."""
from __future__ import annotations

from pathlib import Path
from typing import Optional

import torch
from torch import nn

from ..errors import ScorerMissingError
from .models import ExpressionClassifier, check_input
from .spec import ClassifierSpec

BACKENDS = ("builtin", "torchscript")


class TorchScriptScorer(nn.Module):
    """Wraps an exported model mapping N×3×128×128 images in [0, 1] to N×7 logits."""

    def __init__(self, module: torch.jit.ScriptModule):
        super().__init__()
        self.module = module

    def forward(self, image):
        check_input(image, 3, "image")
        return self.module(image)


def build_scorer(backend: str = "builtin", spec: ClassifierSpec = ClassifierSpec(),
                 path: Optional[str] = None) -> nn.Module:
    """Construct the configured backend; a backend that cannot load raises instead of falling back."""
    if backend == "builtin":
        return ExpressionClassifier(spec, in_channels=3)
    if backend == "torchscript":
        if path is None or not Path(path).exists():
            raise ScorerMissingError(f"scorer missing: torchscript model not found at {path!r}")
        try:
            return TorchScriptScorer(torch.jit.load(str(path), map_location="cpu"))
        except Exception as exc:
            raise ScorerMissingError(f"scorer missing: cannot load {path}: {exc}") from exc
    raise ScorerMissingError(f"scorer missing: unknown backend {backend!r}; expected one of {BACKENDS}")
