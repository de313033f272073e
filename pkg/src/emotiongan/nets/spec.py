"""Architecture descriptions for every network."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from typing import Tuple


@dataclass(frozen=True)
class FlowGeneratorSpec:
    widths: Tuple[int, ...] = (64, 128, 256, 512)
    bottleneck_blocks: int = 2
    decoder_res_blocks: int = 5
    down_kernel: int = 4


@dataclass(frozen=True)
class PatchDiscriminatorSpec:
    widths: Tuple[int, ...] = (64, 128, 256, 512)
    kernel: int = 4
    slope: float = 0.2


@dataclass(frozen=True)
class ClassifierSpec:
    widths: Tuple[int, ...] = (32, 64, 128)
    hidden: int = 128
    kernel: int = 3


@dataclass(frozen=True)
class ImageGeneratorSpec:
    widths: Tuple[int, ...] = (64, 128, 256)
    encoder_res_blocks: int = 3
    decoder_res_blocks: int = 3
    down_kernel: int = 4


@dataclass(frozen=True)
class NetSpec:
    flow_generator: FlowGeneratorSpec = field(default_factory=FlowGeneratorSpec)
    patch_discriminator: PatchDiscriminatorSpec = field(default_factory=PatchDiscriminatorSpec)
    expression_discriminator: ClassifierSpec = field(default_factory=ClassifierSpec)
    image_generator: ImageGeneratorSpec = field(default_factory=ImageGeneratorSpec)
    expression_scorer: ClassifierSpec = field(default_factory=ClassifierSpec)

    def scaled(self, divisor: int) -> "NetSpec":
        """Same topology with every width divided by ``divisor`` (desk-scale runs)."""
        def shrink(spec):
            changes = {"widths": tuple(max(4, w // divisor) for w in spec.widths)}
            if hasattr(spec, "hidden"):
                changes["hidden"] = max(8, spec.hidden // divisor)
            return replace(spec, **changes)
        return NetSpec(*(shrink(getattr(self, f.name)) for f in fields(self)))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetSpec":
        kinds = {"flow_generator": FlowGeneratorSpec, "patch_discriminator": PatchDiscriminatorSpec,
                 "expression_discriminator": ClassifierSpec, "image_generator": ImageGeneratorSpec,
                 "expression_scorer": ClassifierSpec}
        parts = {}
        for name, kind in kinds.items():
            sub = dict(d.get(name, {}))
            if "widths" in sub:
                sub["widths"] = tuple(sub["widths"])
            parts[name] = kind(**sub)
        return cls(**parts)
