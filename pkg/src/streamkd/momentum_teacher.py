"""EMA teacher state, the alpha -> lambda rule, and weight averaging.

The teacher tracks the student as theta_a(t) = a*theta(t) + (1-a)*theta_a(t-1),
updated once per optimizer step, after it. Averaged inference uses
theta* = (theta_student + theta_teacher) / 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
import torch.nn as nn

from .model import _flat_slots, clone_model, flat_params, load_flat_params

INFERENCE_MODES = ("student", "teacher", "averaged")


def lambda_of_alpha(alpha: float) -> float:
    """Distillation weight as a function of EMA momentum, floored at 0."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    return max(0.0, 4.5 * math.log10(alpha) + 14.5)


@dataclass(frozen=True)
class DistillConfig:
    alpha: float = 0.01
    lambda_alpha: float | None = None  # None: derive from alpha
    tau: float = 4.0
    multiview: bool = True

    def __post_init__(self):
        if self.lambda_alpha is None:
            object.__setattr__(self, "lambda_alpha", lambda_of_alpha(self.alpha))
        if self.lambda_alpha < 0:
            raise ValueError("lambda_alpha must be >= 0")
        if self.tau <= 0:
            raise ValueError("tau must be > 0")


@dataclass(frozen=True)
class TeacherState:
    teacher_params: torch.Tensor
    alpha: float
    n_updates: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")


def ema_update(state: TeacherState, student_params: torch.Tensor) -> TeacherState:
    if student_params.shape != state.teacher_params.shape:
        raise ValueError("parameter layout mismatch")
    blended = state.alpha * student_params + (1.0 - state.alpha) * state.teacher_params
    return TeacherState(blended, state.alpha, state.n_updates + 1)


def average_weights(student_params: torch.Tensor,
                    teacher_params: torch.Tensor) -> torch.Tensor:
    if student_params.shape != teacher_params.shape:
        raise ValueError("parameter layout mismatch")
    return (student_params + teacher_params) / 2.0


class MomentumTeacher:
    """Stateful wrapper: a frozen model copy kept in sync by EMA updates.

    Float buffers (BN running stats) blend with the same rule as weights so
    the teacher stays usable for inference on its own.
    """

    def __init__(self, student: nn.Module, alpha: float):
        if not 0.0 < alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {alpha}")
        self.alpha = float(alpha)
        self.model = clone_model(student)
        self.model.eval()
        self.n_updates = 0

    @torch.no_grad()
    def update(self, student: nn.Module) -> None:
        for t, s in zip(_flat_slots(self.model), _flat_slots(student)):
            if t.shape != s.shape:
                raise ValueError("parameter layout mismatch")
            t.mul_(1.0 - self.alpha).add_(s, alpha=self.alpha)
        self.n_updates += 1

    @torch.no_grad()
    def __call__(self, x: torch.Tensor) -> torch.Tensor:
        return self.model(x)


def inference_model(mode: str, student: nn.Module,
                    teacher: MomentumTeacher | None) -> nn.Module:
    """Pick the network used for evaluation passes."""
    if mode not in INFERENCE_MODES:
        raise ValueError(f"mode must be one of {INFERENCE_MODES}")
    if mode == "student" or teacher is None:
        return student
    if mode == "teacher":
        return teacher.model
    averaged = clone_model(student)
    load_flat_params(averaged, average_weights(flat_params(student),
                                               flat_params(teacher.model)))
    return averaged
