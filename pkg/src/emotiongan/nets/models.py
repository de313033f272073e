"""Flow generator, patch discriminator, expression classifiers and image generator."""
from __future__ import annotations

import torch
from torch import nn

from ..errors import DataError
from ..flowcore import MODEL_SIZE, NUM_CLASSES
from .blocks import ConvFeatureBlock, decoder, encoder
from .spec import ClassifierSpec, FlowGeneratorSpec, ImageGeneratorSpec, PatchDiscriminatorSpec


def check_input(x: torch.Tensor, channels: int, name: str = "input") -> None:
    expected = (channels, MODEL_SIZE, MODEL_SIZE)
    if x.dim() != 4 or tuple(x.shape[1:]) != expected:
        raise DataError(f"{name} must be N×{channels}×{MODEL_SIZE}×{MODEL_SIZE}, got {tuple(x.shape)}")


def bound_flow(raw: torch.Tensor) -> torch.Tensor:
    """Map raw 2-channel output to magnitude in [0, 1] and direction in [-1, 1]."""
    return torch.cat([(torch.tanh(raw[:, :1]) + 1.0) / 2.0, torch.tanh(raw[:, 1:])], dim=1)


class FlowGenerator(nn.Module):
    """Encoder (stride-2 blocks), residual bottleneck, residual + upsampling decoder."""

    def __init__(self, spec: FlowGeneratorSpec = FlowGeneratorSpec()):
        super().__init__()
        self.spec = spec
        self.encoder = encoder(2, spec.widths, spec.down_kernel, spec.bottleneck_blocks)
        self.decoder, out_ch = decoder(spec.widths[-1], len(spec.widths), spec.decoder_res_blocks)
        self.head = nn.Conv2d(out_ch, 2, 3, padding=1, padding_mode="reflect")

    def forward(self, nflow):
        check_input(nflow, 2, "normalized flow")
        return bound_flow(self.head(self.decoder(self.encoder(nflow))))


class PatchDiscriminator(nn.Module):
    """Conditional PatchGAN over channel-concatenated (condition, candidate) flows."""

    def __init__(self, spec: PatchDiscriminatorSpec = PatchDiscriminatorSpec()):
        super().__init__()
        self.spec = spec
        layers, prev = [], 4
        for w in spec.widths:
            layers += [
                nn.Conv2d(prev, w, spec.kernel, stride=2, padding=1),
                nn.InstanceNorm2d(w),
                nn.LeakyReLU(spec.slope, inplace=True),
            ]
            prev = w
        layers.append(nn.Conv2d(prev, 1, 3, padding=1))
        self.net = nn.Sequential(*layers)

    def forward(self, condition, candidate):
        check_input(condition, 2, "condition")
        check_input(candidate, 2, "candidate")
        return self.net(torch.cat([condition, candidate], dim=1))


class ExpressionClassifier(nn.Module):
    """Convolutional feature blocks followed by an MLP over the flattened features."""

    def __init__(self, spec: ClassifierSpec = ClassifierSpec(), in_channels: int = 2,
                 num_classes: int = NUM_CLASSES):
        super().__init__()
        self.spec = spec
        self.in_channels = in_channels
        blocks, prev = [], in_channels
        for w in spec.widths:
            blocks.append(ConvFeatureBlock(prev, w, spec.kernel))
            prev = w
        self.features = nn.Sequential(*blocks)
        side = MODEL_SIZE // 2 ** len(spec.widths)
        self.classifier = nn.Sequential(
            nn.Flatten(),
            nn.Linear(prev * side * side, spec.hidden),
            nn.ReLU(inplace=True),
            nn.Linear(spec.hidden, num_classes),
        )

    def forward(self, x):
        check_input(x, self.in_channels)
        return self.classifier(self.features(x))


class ImageGenerator(nn.Module):
    """Motion encoder + identity encoder, fused and decoded into the expressive face."""

    def __init__(self, spec: ImageGeneratorSpec = ImageGeneratorSpec()):
        super().__init__()
        self.spec = spec
        top = spec.widths[-1]
        self.motion_encoder = encoder(2, spec.widths, spec.down_kernel, spec.encoder_res_blocks)
        self.identity_encoder = encoder(3, spec.widths, spec.down_kernel, spec.encoder_res_blocks)
        self.fuse = nn.Conv2d(2 * top, top, 1)
        self.decoder, out_ch = decoder(top, len(spec.widths), spec.decoder_res_blocks)
        self.head = nn.Conv2d(out_ch, 3, 3, padding=1, padding_mode="reflect")

    def forward(self, neutral_face, nflow):
        check_input(neutral_face, 3, "neutral face")
        check_input(nflow, 2, "normalized flow")
        z = torch.cat([self.identity_encoder(neutral_face), self.motion_encoder(nflow)], dim=1)
        return torch.sigmoid(self.head(self.decoder(self.fuse(z))))
