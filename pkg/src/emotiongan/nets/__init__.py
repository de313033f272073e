"""Network architectures, expression scorer, perceptual extractor and checkpoints."""
from .checkpoint import load_checkpoint, save_checkpoint
from .models import (
    ExpressionClassifier, FlowGenerator, ImageGenerator, PatchDiscriminator, bound_flow, check_input,
)
from .perceptual import FeatureExtractor, build_extractor, random_extractor, vgg16_extractor
from .scorer import build_scorer
from .spec import (
    ClassifierSpec, FlowGeneratorSpec, ImageGeneratorSpec, NetSpec, PatchDiscriminatorSpec,
)


def count_parameters(module) -> int:
    return sum(p.numel() for p in module.parameters() if p.requires_grad)


__all__ = [
    "ClassifierSpec", "ExpressionClassifier", "FeatureExtractor", "FlowGenerator", "FlowGeneratorSpec",
    "ImageGenerator", "ImageGeneratorSpec", "NetSpec", "PatchDiscriminator", "PatchDiscriminatorSpec",
    "bound_flow", "build_extractor", "build_scorer", "check_input", "count_parameters",
    "load_checkpoint", "random_extractor", "save_checkpoint", "vgg16_extractor",
]
