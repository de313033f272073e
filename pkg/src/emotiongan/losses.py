"""Loss terms for the flow generator, the discriminators and the image generator."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional

import torch
import torch.nn.functional as F

from .errors import ConfigError, DataError, ExtractorUnavailableError
from .flowcore.normalize import denormalize_tensor


@dataclass(frozen=True)
class LossWeights:
    lambda_gan: float = 1.0
    lambda_epe: float = 7.0
    lambda_char: float = 3.0
    lambda_warp: float = 1.0
    alpha_l1: float = 2.0
    alpha_perc: float = 7.0
    alpha_fer: float = 1.0
    epsilon: float = 1e-3
    connection_epoch: int = 5
    # "per_element": mean(sqrt(d^2 + eps^2)); "aggregate": sqrt(mean|d|^2 + eps^2)
    charbonnier_mode: str = "per_element"

    def __post_init__(self):
        for name in ("lambda_gan", "lambda_epe", "lambda_char", "lambda_warp",
                     "alpha_l1", "alpha_perc", "alpha_fer"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if self.connection_epoch < 0:
            raise ConfigError("connection_epoch must be nonnegative")
        if self.charbonnier_mode not in ("per_element", "aggregate"):
            raise ConfigError(f"unknown charbonnier_mode {self.charbonnier_mode!r}")


def _same_shape(a, b):
    if a.shape != b.shape:
        raise DataError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def cgan_losses(real_scores: torch.Tensor, fake_scores: torch.Tensor):
    """(generator_term, discriminator_term) from patch logits.

    The generator term is the non-saturating BCE(fake, 1); the discriminator
    term is ½[BCE(real, 1) + BCE(fake, 0)], both averaged over patches.
    """
    d_real = F.binary_cross_entropy_with_logits(real_scores, torch.ones_like(real_scores))
    d_fake = F.binary_cross_entropy_with_logits(fake_scores, torch.zeros_like(fake_scores))
    g = F.binary_cross_entropy_with_logits(fake_scores, torch.ones_like(fake_scores))
    return g, 0.5 * (d_real + d_fake)


def generator_adversarial(fake_scores: torch.Tensor) -> torch.Tensor:
    return F.binary_cross_entropy_with_logits(fake_scores, torch.ones_like(fake_scores))


def discriminator_adversarial(real_scores: torch.Tensor, fake_scores: torch.Tensor) -> torch.Tensor:
    return cgan_losses(real_scores, fake_scores)[1]


def epe_loss(predicted: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean endpoint error between N×2×H×W Cartesian flows (pixels)."""
    _same_shape(predicted, target)
    return torch.linalg.vector_norm(predicted - target, dim=1).mean()


def charbonnier_loss(predicted: torch.Tensor, target: torch.Tensor, epsilon: float = 1e-3,
                     mode: str = "per_element") -> torch.Tensor:
    if not epsilon > 0:
        raise ConfigError("epsilon must be positive")
    _same_shape(predicted, target)
    d = predicted - target
    if mode == "per_element":
        return torch.sqrt(d * d + epsilon ** 2).mean()
    if mode == "aggregate":
        return torch.sqrt(d.abs().mean() ** 2 + epsilon ** 2)
    raise ConfigError(f"unknown charbonnier mode {mode!r}")


def l1_loss(predicted: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    _same_shape(predicted, target)
    return (predicted - target).abs().mean()


def expression_ce(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean of -log softmax(logits)[label]."""
    return F.cross_entropy(logits, labels)


def perceptual_loss(image_a: torch.Tensor, image_b: torch.Tensor, extractor) -> torch.Tensor:
    """Mean squared distance between extractor feature maps, averaged over the configured layers."""
    _same_shape(image_a, image_b)
    if extractor is None:
        raise ExtractorUnavailableError("perceptual loss needs a feature extractor")
    fa = extractor(image_a)
    fb = extractor(image_b)
    return sum(F.mse_loss(a, b) for a, b in zip(fa, fb)) / len(fa)


def warping_total(generated_face, target_face, logits, labels, weights: LossWeights, extractor=None,
                  terms: Optional[Dict[str, torch.Tensor]] = None) -> torch.Tensor:
    """α1·L1 + α2·perceptual + α3·CE of the image scorer's logits."""
    l1 = l1_loss(generated_face, target_face)
    if weights.alpha_perc > 0:
        perc = perceptual_loss(generated_face, target_face, extractor)
    else:
        perc = generated_face.new_zeros(())
    ce = expression_ce(logits, labels) if weights.alpha_fer > 0 else generated_face.new_zeros(())
    if terms is not None:
        terms.update(l1=l1, perceptual=perc, fer_ce=ce)
    return weights.alpha_l1 * l1 + weights.alpha_perc * perc + weights.alpha_fer * ce


ABLATIONS = ("full", "no_recon", "no_expression", "no_warping")


def coupling_active(epoch: int, weights: LossWeights) -> bool:
    return epoch >= weights.connection_epoch


def flow_total(adversarial, expression, epe_term, charbonnier_term, warping_term, epoch: int,
               weights: LossWeights, ablation: str = "full"):
    """λ1·½(adv + expression CE) + λ2·EPE + λ3·Charbonnier + 1[epoch ≥ e_c]·λ4·L_GW.

    ``ablation`` removes one main loss: the reconstruction pair, the
    expression-discriminator term, or the warping term. ``warping_term`` may
    be None when the coupling is inactive.
    """
    if epoch < 0:
        raise ValueError("epoch must be nonnegative")
    if ablation not in ABLATIONS:
        raise ConfigError(f"unknown ablation {ablation!r}; expected one of {ABLATIONS}")
    expr = 0.0 if ablation == "no_expression" else expression
    total = weights.lambda_gan * 0.5 * (adversarial + expr)
    if ablation != "no_recon":
        total = total + weights.lambda_epe * epe_term + weights.lambda_char * charbonnier_term
    if ablation != "no_warping" and coupling_active(epoch, weights) and warping_term is not None:
        total = total + weights.lambda_warp * warping_term
    return total


def flow_reconstruction_terms(generated_nflow, target_nflow, clip: float, weights: LossWeights):
    """EPE and Charbonnier on denormalized (pixel-unit) flows."""
    pred = denormalize_tensor(generated_nflow, clip)
    tgt = denormalize_tensor(target_nflow, clip)
    return epe_loss(pred, tgt), charbonnier_loss(pred, tgt, weights.epsilon, weights.charbonnier_mode)
