"""Adversarial, cycle-consistency, and voxel-wise objectives.

Unpaired adversarial terms are least-squares on the linear patch map
(real -> 1, fake -> 0); paired terms keep the negative log-likelihood on the
sigmoid patch map. Cycle and voxel-wise terms are mean L1. The generator's
adversarial term ships in two modes: ``non_saturating`` (default; least
squares toward the real label / -log D) and ``as_written`` (the literal
published update expressions, which descend D(fake)^2 and log(1 - D)).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch

LOG_EPS = 1e-7

GENERATOR_ADV_MODES = ("non_saturating", "as_written")


@dataclass(frozen=True)
class LossWeights:
    lambda_cyc: float = 10.0
    gamma_l1: float = 100.0
    adv_weight: float = 1.0
    generator_adv_mode: str = "non_saturating"

    def __post_init__(self):
        if self.lambda_cyc < 0 or self.gamma_l1 < 0 or self.adv_weight < 0:
            raise ValueError("loss weights must be >= 0")
        if self.generator_adv_mode not in GENERATOR_ADV_MODES:
            raise ValueError(
                f"generator_adv_mode must be one of {GENERATOR_ADV_MODES}")


@dataclass
class LossReport:
    """Per-iteration diagnostic decomposition of the training objective."""

    d_mr_unpaired: float = 0.0
    d_ct_unpaired: float = 0.0
    d_mr_paired: float = 0.0
    d_ct_paired: float = 0.0
    g_adv_unpaired: float = 0.0
    g_adv_paired: float = 0.0
    cyc_unpaired: float = 0.0
    cyc_paired: float = 0.0
    l1_paired: float = 0.0
    total_g: float = 0.0

    FIELDS = ("d_mr_unpaired", "d_ct_unpaired", "d_mr_paired", "d_ct_paired",
              "g_adv_unpaired", "g_adv_paired", "cyc_unpaired", "cyc_paired",
              "l1_paired", "total_g")

    def values(self) -> list[float]:
        return [getattr(self, name) for name in self.FIELDS]

    def is_finite(self) -> bool:
        return all(torch.isfinite(torch.tensor(self.values())).tolist())


def _check_shapes(a: torch.Tensor, b: torch.Tensor) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def d_loss_unpaired(d_real: torch.Tensor, d_fake: torch.Tensor) -> torch.Tensor:
    """Least-squares discriminator loss: mean (D(real)-1)^2 + mean D(fake)^2."""
    _check_shapes(d_real, d_fake)
    return (d_real - 1.0).pow(2).mean() + d_fake.pow(2).mean()


def g_loss_unpaired(d_fake: torch.Tensor,
                    mode: str = "non_saturating") -> torch.Tensor:
    """Generator's least-squares adversarial term on an unpaired patch map."""
    if mode == "as_written":
        return d_fake.pow(2).mean()
    if mode == "non_saturating":
        return (d_fake - 1.0).pow(2).mean()
    raise ValueError(f"unknown generator adversarial mode {mode!r}")


def _safe_log(x: torch.Tensor) -> torch.Tensor:
    return torch.log(x.clamp(LOG_EPS, 1.0 - LOG_EPS))


def d_loss_paired(d_real_pair: torch.Tensor,
                  d_fake_pair: torch.Tensor) -> torch.Tensor:
    """NLL discriminator loss: -mean log D(real pair) - mean log(1 - D(fake pair))."""
    _check_shapes(d_real_pair, d_fake_pair)
    return -_safe_log(d_real_pair).mean() - _safe_log(1.0 - d_fake_pair).mean()


def g_loss_paired(d_fake_pair: torch.Tensor,
                  mode: str = "non_saturating") -> torch.Tensor:
    """Generator's NLL adversarial term on a paired patch map."""
    if mode == "as_written":
        return _safe_log(1.0 - d_fake_pair).mean()
    if mode == "non_saturating":
        return -_safe_log(d_fake_pair).mean()
    raise ValueError(f"unknown generator adversarial mode {mode!r}")


def cycle_loss(x: torch.Tensor, x_reconstructed: torch.Tensor) -> torch.Tensor:
    """Mean absolute difference between an image and its two-hop reconstruction."""
    _check_shapes(x, x_reconstructed)
    return (x_reconstructed - x).abs().mean()


def l1_loss(reference: torch.Tensor, synthesized: torch.Tensor) -> torch.Tensor:
    """Mean absolute difference between a synthesized image and its reference."""
    _check_shapes(reference, synthesized)
    return (synthesized - reference).abs().mean()


def total_generator_loss(g_adv_total, cyc_total, l1_total,
                         weights: LossWeights = LossWeights(),
                         report: LossReport | None = None):
    """Weighted overall generator objective: adv + lambda*cyc + gamma*l1.

    Accepts tensors or floats; returns (total, report) with the report's
    total_g filled in.
    """
    total = (weights.adv_weight * g_adv_total
             + weights.lambda_cyc * cyc_total
             + weights.gamma_l1 * l1_total)
    value = float(total) if not torch.is_tensor(total) else float(total.item())
    if not torch.isfinite(torch.tensor(value)):
        raise FloatingPointError(f"non-finite total generator loss: {value}")
    if report is None:
        report = LossReport()
    report.total_g = value
    return total, report
