"""SGD with Nesterov momentum and coupled L2 weight decay.

Per parameter array ``w`` with gradient ``g``::

    g' = g + decay * w
    v  = momentum * v - lr * g'
    w  = w + momentum * v - lr * g'
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .masked_net import WeightStore


@dataclass
class OptimizerState:
    lr0: float
    momentum: float = 0.9
    weight_decay: float = 1e-4
    decay_biases: bool = True
    lr: float | None = None
    velocity: list[np.ndarray] | None = field(default=None, repr=False)

    def __post_init__(self):
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ValueError("weight decay must be non-negative")
        if self.lr is None:
            self.lr = self.lr0


def sgd_step(weights: WeightStore, grads: WeightStore, state: OptimizerState) -> None:
    """Update ``weights`` and ``state.velocity`` in place."""
    params = weights.params()
    gparams = grads.params()
    if state.velocity is None:
        state.velocity = [np.zeros_like(p) for p in params]
    if len(gparams) != len(params) or len(state.velocity) != len(params):
        raise ValueError("gradient / velocity structure does not match weights")
    mu, lr = state.momentum, state.lr
    for i, (w, g, v) in enumerate(zip(params, gparams, state.velocity)):
        if g.shape != w.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter shape {w.shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient")
        is_bias = i % 2 == 1
        if state.weight_decay and (state.decay_biases or not is_bias):
            g = g + state.weight_decay * w
        v *= mu
        v -= lr * g
        w += mu * v - lr * g


def lr_schedule(lr0: float, epoch: int, total_epochs: int) -> float:
    """Step schedule: lr0, then /10 from half the epochs, /100 from three quarters."""
    if not 0 <= epoch < total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {total_epochs})")
    if epoch < total_epochs // 2:
        return lr0
    if epoch < (3 * total_epochs) // 4:
        return lr0 / 10
    return lr0 / 100
