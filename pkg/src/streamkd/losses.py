"""Training objectives: replay baselines, momentum distillation, snapshot KD.

Composition rule: the baseline loss is computed first, then the distillation
objective (which carries its own CE term) is added on top. All teacher logits
are detached, so no gradient ever reaches teacher weights or stored logits.
KL terms use temperature-scaled softmax on both sides with no extra tau^2
gradient rescaling.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .momentum_teacher import DistillConfig


@dataclass(frozen=True)
class LossBreakdown:
    total: torch.Tensor
    ce: torch.Tensor
    distill: torch.Tensor
    baseline_extra: torch.Tensor

    def item_dict(self) -> dict[str, float]:
        return {"total": float(self.total.detach()), "ce": float(self.ce.detach()),
                "distill": float(self.distill.detach()),
                "baseline_extra": float(self.baseline_extra.detach())}


def _zero(like: torch.Tensor) -> torch.Tensor:
    return torch.zeros((), dtype=like.dtype, device=like.device)


def as_breakdown(ce_total: torch.Tensor) -> LossBreakdown:
    z = _zero(ce_total)
    return LossBreakdown(total=ce_total, ce=ce_total, distill=z, baseline_extra=z)


def kl_distill(teacher_logits: torch.Tensor, student_logits: torch.Tensor,
               tau: float) -> torch.Tensor:
    """Batch-mean KL(softmax(teacher/tau) || softmax(student/tau))."""
    if teacher_logits.shape != student_logits.shape:
        raise ValueError("teacher/student logit shapes differ")
    if tau <= 0:
        raise ValueError("tau must be > 0")
    log_p = F.log_softmax(teacher_logits.detach() / tau, dim=1)
    log_q = F.log_softmax(student_logits / tau, dim=1)
    return (log_p.exp() * (log_p - log_q)).sum(dim=1).mean()


def er_loss(batch_logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean cross-entropy over the combined stream+memory batch."""
    if batch_logits.shape[0] == 0:
        raise ValueError("empty batch")
    return F.cross_entropy(batch_logits, labels)


def mkd_loss(x_raw: torch.Tensor, x_aug: torch.Tensor, y: torch.Tensor,
             student, teacher, cfg: DistillConfig) -> LossBreakdown:
    """CE on the augmented view plus half-weight KL against both teacher views."""
    student_logits = student(x_aug)
    ce = F.cross_entropy(student_logits, y)
    with torch.no_grad():
        t_raw = teacher(x_raw)
        t_aug = teacher(x_aug)
    half = cfg.lambda_alpha / 2.0
    distill = half * kl_distill(t_raw, student_logits, cfg.tau) \
        + half * kl_distill(t_aug, student_logits, cfg.tau)
    z = _zero(ce)
    return LossBreakdown(total=ce + distill, ce=ce, distill=distill, baseline_extra=z)


def mkd_loss_single_view(x_aug: torch.Tensor, y: torch.Tensor,
                         student, teacher, cfg: DistillConfig) -> LossBreakdown:
    student_logits = student(x_aug)
    ce = F.cross_entropy(student_logits, y)
    with torch.no_grad():
        t_aug = teacher(x_aug)
    distill = cfg.lambda_alpha * kl_distill(t_aug, student_logits, cfg.tau)
    z = _zero(ce)
    return LossBreakdown(total=ce + distill, ce=ce, distill=distill, baseline_extra=z)


def derpp_loss(student, stream_x: torch.Tensor, stream_y: torch.Tensor,
               mem_a: tuple[torch.Tensor, torch.Tensor] | None,
               mem_b: tuple[torch.Tensor, torch.Tensor] | None,
               alpha_d: float = 0.1, beta_d: float = 0.5) -> LossBreakdown:
    """CE(stream) + alpha_d*MSE(student(mem_a), stored logits) + beta_d*CE(mem_b).

    mem_a is (images, stored_logits), mem_b is (images, labels); both are
    independent memory draws. Either may be None (empty memory), degrading
    gracefully to the stream CE.
    """
    ce = F.cross_entropy(student(stream_x), stream_y)
    extra = _zero(ce)
    if mem_a is not None and len(mem_a[0]) > 0:
        xa, stored = mem_a
        extra = extra + alpha_d * F.mse_loss(student(xa), stored.detach())
    if mem_b is not None and len(mem_b[0]) > 0:
        xb, yb = mem_b
        extra = extra + beta_d * F.cross_entropy(student(xb), yb)
    z = _zero(ce)
    return LossBreakdown(total=ce + extra, ce=ce, distill=z, baseline_extra=extra)


def erace_loss(student, stream_x: torch.Tensor, stream_y: torch.Tensor,
               mem_x: torch.Tensor | None, mem_y: torch.Tensor | None,
               current_classes: set[int] | frozenset[int]) -> torch.Tensor:
    """Asymmetric CE: stream logits masked to current classes, memory unmasked."""
    logits = student(stream_x)
    keep = torch.zeros(logits.shape[1], dtype=torch.bool, device=logits.device)
    keep[sorted(current_classes)] = True
    masked = logits.masked_fill(~keep, float("-inf"))
    loss = F.cross_entropy(masked, stream_y)
    if mem_x is not None and len(mem_x) > 0:
        loss = loss + F.cross_entropy(student(mem_x), mem_y)
    return loss


def snapshot_kd_loss(x: torch.Tensor, y: torch.Tensor, student, frozen_teacher,
                     lambda_fixed: float, tau: float = 4.0) -> torch.Tensor:
    """CE plus fixed-weight KL against a frozen boundary snapshot."""
    student_logits = student(x)
    ce = F.cross_entropy(student_logits, y)
    if frozen_teacher is None:
        return ce
    with torch.no_grad():
        t_logits = frozen_teacher(x)
    return ce + lambda_fixed * kl_distill(t_logits, student_logits, tau)


def compose(base: LossBreakdown | torch.Tensor, mkd: LossBreakdown) -> LossBreakdown:
    """Add the distillation objective on top of a baseline loss."""
    if not isinstance(base, LossBreakdown):
        base = as_breakdown(base)
    return LossBreakdown(
        total=base.total + mkd.total,
        ce=base.ce + mkd.ce,
        distill=base.distill + mkd.distill,
        baseline_extra=base.baseline_extra + mkd.baseline_extra,
    )
