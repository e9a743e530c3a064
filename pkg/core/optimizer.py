"""
Optimizer - Adam with bias correction, warmup + cosine learning-rate schedule,
and the per-atom usage counters that drive dead-atom detection.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator

from core.dictionary import Dictionary, EncoderConfig, renormalize_columns
from core.errors import shape_mismatch
from core.gradients import GradientSet


class LRSchedule(BaseModel):
    """Linear warmup from 0 to lr_init, then cosine decay to lr_final at total_steps."""

    lr_init: float = Field(default=5e-4, ge=0)
    lr_final: float = Field(default=1e-6, ge=0)
    warmup_steps: int = Field(default=0, ge=0)
    total_steps: int = Field(default=1, ge=0)

    @model_validator(mode="after")
    def _warmup_within_total(self) -> "LRSchedule":
        if self.warmup_steps > self.total_steps:
            raise ValueError(f"warmup_steps ({self.warmup_steps}) must not exceed total_steps ({self.total_steps})")
        return self


class AdamHyper(BaseModel):
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    eps: float = Field(default=1e-8, gt=0)


def lr_at(step: int, schedule: LRSchedule) -> float:
    """
    Learning rate at a given update count.

    Args:
        step: Update count, ≥ 0
        schedule: Warmup/cosine schedule

    Returns:
        0 at step 0 (when warming up), lr_init at warmup_steps, lr_final at and
        beyond total_steps
    """
    if step < 0:
        raise ValueError(f"step must be ≥ 0, got {step}")
    if step < schedule.warmup_steps:
        return schedule.lr_init * step / schedule.warmup_steps
    if step >= schedule.total_steps:
        return schedule.lr_final
    span = schedule.total_steps - schedule.warmup_steps
    progress = (step - schedule.warmup_steps) / span
    cosine = 0.5 * (1.0 + math.cos(math.pi * progress))
    return schedule.lr_final + (schedule.lr_init - schedule.lr_final) * cosine


@dataclass
class TrainState:
    """
    Optimizer state carried across batches.

    Attributes:
        first_moment: Adam m per parameter name (checkpoint names D, b_pre, W, b, theta)
        second_moment: Adam v per parameter name
        step: Completed updates
        usage: Per-atom count of consecutive steps without activation
        schedule: Learning-rate schedule
    """

    first_moment: Dict[str, np.ndarray]
    second_moment: Dict[str, np.ndarray]
    usage: np.ndarray
    schedule: LRSchedule
    step: int = 0
    hyper: AdamHyper = field(default_factory=AdamHyper)

    @classmethod
    def for_dictionary(
        cls,
        dictionary: Dictionary,
        schedule: LRSchedule,
        hyper: Optional[AdamHyper] = None,
    ) -> "TrainState":
        """Zero moments shaped like every parameter of the dictionary."""
        arrays = dictionary.arrays()
        return cls(
            first_moment={name: np.zeros_like(a) for name, a in arrays.items()},
            second_moment={name: np.zeros_like(a) for name, a in arrays.items()},
            usage=np.zeros(dictionary.p, dtype=np.int64),
            schedule=schedule,
            hyper=hyper or AdamHyper(),
        )

    def dead_mask(self, threshold: int) -> np.ndarray:
        """Atoms idle for more than `threshold` steps."""
        return self.usage > threshold


def adam_step(
    state: TrainState,
    params: Dictionary,
    grads: GradientSet,
    cfg: Optional[EncoderConfig] = None,
) -> Dictionary:
    """
    One Adam update followed by decoder renormalization and threshold projection.

    The update uses lr_at(state.step + 1); state moments and step are advanced
    in place.

    Args:
        state: Optimizer state (mutated)
        params: Current parameters (left unchanged)
        grads: Gradients matching the parameters
        cfg: Encoder config; b_pre stays fixed when cfg.freeze_b_pre

    Returns:
        Updated, normalized Dictionary

    Raises:
        DimensionError: If a gradient or moment does not match its parameter
    """
    hyper = state.hyper
    t = state.step + 1
    lr = lr_at(t, state.schedule)
    correction1 = 1.0 - hyper.beta1 ** t
    correction2 = 1.0 - hyper.beta2 ** t

    updated = params.copy()
    targets = updated.arrays()
    frozen = {"b_pre"} if cfg is not None and cfg.freeze_b_pre else set()

    for name, grad in grads.as_dict().items():
        if name not in targets:
            raise shape_mismatch(f"gradient {name} without parameter", grad.shape, ())
        param = targets[name]
        if grad.shape != param.shape:
            raise shape_mismatch(f"gradient {name}", grad.shape, param.shape)
        m = state.first_moment[name]
        v = state.second_moment[name]
        if m.shape != param.shape:
            raise shape_mismatch(f"moment {name}", m.shape, param.shape)

        m *= hyper.beta1
        m += (1.0 - hyper.beta1) * grad
        v *= hyper.beta2
        v += (1.0 - hyper.beta2) * grad * grad
        if name in frozen:
            continue
        # in-place so the Dictionary fields see the update
        param -= lr * (m / correction1) / (np.sqrt(v / correction2) + hyper.eps)

    state.step = t
    # projection must precede renormalize_columns, whose copy re-checks θ ≥ 0
    if updated.thresholds is not None:
        np.maximum(updated.thresholds, 0.0, out=updated.thresholds)
    normalized, _ = renormalize_columns(updated)
    return normalized


def update_usage(state: TrainState, active: np.ndarray) -> None:
    """
    Advance usage counters after a batch.

    Args:
        state: Optimizer state (usage mutated)
        active: Per-atom flag, True if the atom appeared in any active set of the batch
    """
    active = np.asarray(active, dtype=bool)
    if active.shape != state.usage.shape:
        raise shape_mismatch("usage update", active.shape, state.usage.shape)
    state.usage = np.where(active, 0, state.usage + 1)
