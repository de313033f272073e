"""Frozen convolutional feature extractors for the perceptual loss."""
from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import torch
from torch import nn

from ..errors import ExtractorUnavailableError

# indices into torchvision's vgg16.features after which features are taken (relu1_2, relu2_2, relu3_3)
VGG16_LAYERS = (3, 8, 15)
_IMAGENET_MEAN = (0.485, 0.456, 0.406)
_IMAGENET_STD = (0.229, 0.224, 0.225)


class FeatureExtractor(nn.Module):
    """Runs a frozen convolutional trunk and returns activations after ``layers``."""

    def __init__(self, trunk: nn.Sequential, layers: Sequence[int], normalize: bool = True):
        super().__init__()
        self.trunk = trunk[: max(layers) + 1]
        self.layers = tuple(sorted(layers))
        self.normalize = normalize
        self.register_buffer("mean", torch.tensor(_IMAGENET_MEAN).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor(_IMAGENET_STD).view(1, 3, 1, 1))
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()

    def train(self, mode: bool = True):
        return super().train(False)

    def forward(self, x):
        if self.normalize:
            x = (x - self.mean) / self.std
        feats = []
        for i, layer in enumerate(self.trunk):
            x = layer(x)
            if i in self.layers:
                feats.append(x)
        return feats


def _vgg_like(widths: Sequence[int], convs_per_stage: int = 2) -> nn.Sequential:
    layers, prev = [], 3
    for s, w in enumerate(widths):
        if s > 0:
            layers.append(nn.MaxPool2d(2))
        for _ in range(convs_per_stage):
            layers += [nn.Conv2d(prev, w, 3, padding=1), nn.ReLU()]
            prev = w
    return nn.Sequential(*layers)


def random_extractor(widths: Sequence[int] = (16, 32, 64), seed: int = 0) -> FeatureExtractor:
    """VGG-topology trunk with fixed seeded He-initialized weights (no download needed)."""
    gen = torch.Generator().manual_seed(seed)
    trunk = _vgg_like(widths)
    with torch.no_grad():
        for m in trunk:
            if isinstance(m, nn.Conv2d):
                fan_in = m.in_channels * 9
                m.weight.copy_(torch.randn(m.weight.shape, generator=gen) * (2.0 / fan_in) ** 0.5)
                m.bias.zero_()
    # ReLU outputs after the last conv of each stage
    stage_ends, idx = [], -1
    for s in range(len(widths)):
        idx += (1 if s > 0 else 0) + 4
        stage_ends.append(idx)
    return FeatureExtractor(trunk, stage_ends)


def vgg16_extractor(weights_path: Optional[str] = None, layers: Sequence[int] = VGG16_LAYERS) -> FeatureExtractor:
    """ImageNet VGG16 trunk from a local weights file or the torch hub cache; never downloads."""
    import torchvision

    model = torchvision.models.vgg16(weights=None)
    if weights_path is None:
        hub = Path(torch.hub.get_dir()) / "checkpoints" / "vgg16-397923af.pth"
        weights_path = str(hub)
    path = Path(weights_path)
    if not path.exists():
        raise ExtractorUnavailableError(
            f"VGG16 weights not found at {path}; provide perceptual.weights_path or use backend 'random'")
    try:
        state = torch.load(path, map_location="cpu", weights_only=True)
        model.load_state_dict(state)
    except Exception as exc:
        raise ExtractorUnavailableError(f"cannot load VGG16 weights from {path}: {exc}") from exc
    return FeatureExtractor(model.features, layers)


def build_extractor(backend: str = "vgg16", weights_path: Optional[str] = None, layers=None,
                    widths: Sequence[int] = (16, 32, 64), seed: int = 0) -> FeatureExtractor:
    if backend == "vgg16":
        return vgg16_extractor(weights_path, layers or VGG16_LAYERS)
    if backend == "random":
        return random_extractor(widths, seed)
    raise ExtractorUnavailableError(f"unknown perceptual backend {backend!r}")
