"""Training objectives: cyclic reconstruction, generator L1, critic loss
with gradient penalty, bounding-box regression, and the weighted total.

Reconstruction terms default to per-element means so the weight
coefficients stay resolution-independent; reduction="sum" recovers the
literal per-sample sums.  The critic is minimized in the standard
Wasserstein direction: mean(fake) - mean(real) + penalty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch


@dataclass
class LossWeights:
    mu1: float = 0.90
    mu2: float = 10.0
    mu3: float = 0.10
    lambda_gp: float = 10.0
    objectness: float = 1.0
    classification: float = 1.0
    adversarial: float = 1e-3  # generator-side critic-score weight

    def __post_init__(self):
        vals = (self.mu1, self.mu2, self.mu3, self.lambda_gp, self.objectness,
                self.classification, self.adversarial)
        if any(not math.isfinite(v) or v < 0 for v in vals):
            raise ValueError(f"loss weights must be finite and >= 0, got {vals}")


@dataclass
class LossReport:
    l_cyclic: float = 0.0
    l_gen_l1: float = 0.0
    l_adversarial: float = 0.0
    l_critic: float = 0.0
    l_gp: float = 0.0
    l_bbox: float = 0.0
    l_objectness: float = 0.0
    l_classification: float = 0.0
    l_total: float = 0.0

    def to_dict(self) -> dict[str, float]:
        return dict(self.__dict__)


def _reduce(x: torch.Tensor, reduction: str) -> torch.Tensor:
    if reduction == "mean":
        return x.mean()
    if reduction == "sum":
        # per-sample sum averaged over the batch
        return x.reshape(x.shape[0], -1).sum(dim=1).mean()
    raise ValueError(f"unknown reduction {reduction!r}")


def l1_loss(a: torch.Tensor, b: torch.Tensor, reduction: str = "mean") -> torch.Tensor:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")
    return _reduce((a - b).abs(), reduction)


def mse_loss(a: torch.Tensor, b: torch.Tensor, reduction: str = "mean") -> torch.Tensor:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")
    return _reduce((a - b) ** 2, reduction)


def generator_l1(sr_batch: torch.Tensor, hr_batch: torch.Tensor,
                 reduction: str = "mean") -> torch.Tensor:
    return l1_loss(sr_batch, hr_batch, reduction)


def cyclic_loss(i_lr: torch.Tensor, i_hr: torch.Tensor, hr_gen, lr_gen,
                reduction: str = "mean") -> torch.Tensor:
    """L1(HR(lr), hr) + MSE(HR(LR(hr)), hr) + L1(LR(hr), lr) + MSE(LR(HR(lr)), lr)."""
    sr = hr_gen(i_lr)
    if sr.shape != i_hr.shape:
        raise ValueError(
            f"hr_gen output {tuple(sr.shape)} does not match HR batch {tuple(i_hr.shape)}"
        )
    lr_fake = lr_gen(i_hr)
    if lr_fake.shape != i_lr.shape:
        raise ValueError(
            f"lr_gen output {tuple(lr_fake.shape)} does not match LR batch {tuple(i_lr.shape)}"
        )
    return (
        l1_loss(sr, i_hr, reduction)
        + mse_loss(hr_gen(lr_fake), i_hr, reduction)
        + l1_loss(lr_fake, i_lr, reduction)
        + mse_loss(lr_gen(sr), i_lr, reduction)
    )


def gradient_penalty(critic, real_batch: torch.Tensor, fake_batch: torch.Tensor,
                     lambda_gp: float = 10.0,
                     generator: torch.Generator | None = None) -> torch.Tensor:
    """lambda * E[(||grad_x critic(x_hat)||_2 - 1)^2], x_hat on the
    real-fake segment with per-sample uniform mixing."""
    if real_batch.shape != fake_batch.shape:
        raise ValueError(
            f"shape mismatch {tuple(real_batch.shape)} vs {tuple(fake_batch.shape)}"
        )
    if lambda_gp == 0.0:
        return real_batch.new_zeros(())
    b = real_batch.shape[0]
    eps_shape = (b,) + (1,) * (real_batch.ndim - 1)
    eps = torch.rand(eps_shape, generator=generator,
                     dtype=real_batch.dtype, device=real_batch.device)
    x_hat = (eps * real_batch + (1.0 - eps) * fake_batch).detach().requires_grad_(True)
    scores = critic(x_hat)
    (grad,) = torch.autograd.grad(
        scores, x_hat, grad_outputs=torch.ones_like(scores), create_graph=True
    )
    if not torch.isfinite(grad).all():
        raise ValueError("non-finite critic input-gradient in penalty")
    norms = grad.reshape(b, -1).norm(2, dim=1)
    return lambda_gp * ((norms - 1.0) ** 2).mean()


def critic_loss(real_scores: torch.Tensor, fake_scores: torch.Tensor,
                gp: torch.Tensor | float = 0.0) -> torch.Tensor:
    if real_scores.numel() == 0 or fake_scores.numel() == 0:
        raise ValueError("empty score batch")
    return fake_scores.mean() - real_scores.mean() + gp


def generator_adversarial(fake_scores: torch.Tensor) -> torch.Tensor:
    if fake_scores.numel() == 0:
        raise ValueError("empty score batch")
    return -fake_scores.mean()


def bbox_loss(pred_boxes: torch.Tensor, target_boxes: torch.Tensor) -> torch.Tensor:
    """Sum of squared coordinate errors over positively assigned
    (cell, anchor) pairs; boxes are (x, y, w, h) in normalized units."""
    if pred_boxes.shape != target_boxes.shape or pred_boxes.shape[-1] != 4:
        raise ValueError(
            f"misaligned box lists {tuple(pred_boxes.shape)} vs {tuple(target_boxes.shape)}"
        )
    if pred_boxes.numel() == 0:
        return pred_boxes.new_zeros(())
    return ((pred_boxes - target_boxes) ** 2).sum()


def total_loss(l_gen: torch.Tensor | float, l_dis: torch.Tensor | float,
               l_det: torch.Tensor | float, weights: LossWeights) -> torch.Tensor:
    terms = []
    for t in (l_gen, l_dis, l_det):
        if not torch.is_tensor(t):
            t = torch.tensor(float(t), dtype=torch.float64)
        if not torch.isfinite(t).all():
            raise ValueError("non-finite loss term")
        terms.append(t)
    return weights.mu1 * terms[0] + weights.mu2 * terms[1] + weights.mu3 * terms[2]
