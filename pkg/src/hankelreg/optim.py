"""Adam, reduce-on-plateau learning-rate scheduling and early stopping."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .rnn import RnnParams


@dataclass(frozen=True)
class AdamState:
    first_moment: RnnParams
    second_moment: RnnParams
    step_count: int = 0
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, params: RnnParams, learning_rate: float = 0.01, **kwargs) -> "AdamState":
        return cls(params.zeros_like(), params.zeros_like(), 0, learning_rate, **kwargs)


def adam_step(state: AdamState, params: RnnParams, grad: RnnParams) -> tuple[AdamState, RnnParams]:
    for name, g in grad.arrays().items():
        if g.shape != getattr(params, name).shape:
            raise ValueError(f"gradient {name} has shape {g.shape}, parameter has {getattr(params, name).shape}")
    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    m = state.first_moment.map(lambda m, g: b1 * m + (1.0 - b1) * g, grad)
    v = state.second_moment.map(lambda v, g: b2 * v + (1.0 - b2) * g * g, grad)
    c1, c2 = 1.0 - b1**t, 1.0 - b2**t
    lr, eps = state.learning_rate, state.eps
    new = params.map(lambda p, m, v: p - lr * (m / c1) / (np.sqrt(v / c2) + eps), m, v)
    return replace(state, first_moment=m, second_moment=v, step_count=t), new


@dataclass(frozen=True)
class SchedulerState:
    best_validation: float = math.inf
    epochs_since_improvement: int = 0
    plateau_epochs: int = 0  # reset by improvements and by every reduction
    patience: int = 5
    reduction_factor: float = 0.5
    min_lr: float = 1e-5
    early_stop_patience: int = 20
    threshold: float = 1e-4
    stopped: bool = False

    def __post_init__(self):
        if not 0.0 < self.reduction_factor < 1.0:
            raise ValueError("reduction_factor must lie in (0, 1)")


def scheduler_step(state: SchedulerState, validation_loss: float, lr: float) -> tuple[SchedulerState, float, bool]:
    if not math.isfinite(validation_loss):
        raise ValueError(f"validation loss is not finite: {validation_loss}")
    if validation_loss < state.best_validation - state.threshold:
        state = replace(state, best_validation=validation_loss, epochs_since_improvement=0, plateau_epochs=0)
    else:
        state = replace(
            state,
            epochs_since_improvement=state.epochs_since_improvement + 1,
            plateau_epochs=state.plateau_epochs + 1,
        )
        if state.plateau_epochs >= state.patience:
            lr = max(lr * state.reduction_factor, state.min_lr)
            state = replace(state, plateau_epochs=0)
    stop = state.stopped or state.epochs_since_improvement >= state.early_stop_patience
    return replace(state, stopped=stop), lr, stop
