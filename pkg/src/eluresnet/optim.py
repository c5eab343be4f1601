"""SGD with classical momentum, L2 weight decay and a step learning-rate schedule."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from eluresnet.model import DivergenceError

NO_DECAY_SUFFIXES = (".bias", ".gamma", ".beta")


@dataclass
class TrainSchedule:
    base_lr: float = 0.1
    decay_points: tuple[int, ...] = (81, 122)
    decay_factor: float = 10.0
    momentum: float = 0.9
    weight_decay: float = 1e-4
    batch_size: int = 128
    total_epochs: int = 164
    seed: int = 0
    decay_all: bool = False  # also decay BN scale/shift and biases

    def __post_init__(self):
        self.decay_points = tuple(int(p) for p in self.decay_points)
        if any(b <= a for a, b in zip(self.decay_points, self.decay_points[1:])):
            raise ValueError(f"decay points must be strictly increasing: {self.decay_points}")
        if self.base_lr <= 0 or self.decay_factor <= 0:
            raise ValueError("learning rate and decay factor must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ValueError("weight decay must be non-negative")
        if self.batch_size < 1 or self.total_epochs < 0:
            raise ValueError("batch size must be positive and epoch count non-negative")


def lr_at_epoch(sched: TrainSchedule, epoch: int) -> float:
    """Learning rate for a 0-indexed epoch: divided by ``decay_factor`` at each decay point."""
    if epoch < 0:
        raise ValueError(f"epoch must be non-negative, got {epoch}")
    drops = sum(1 for p in sched.decay_points if epoch >= p)
    return sched.base_lr / sched.decay_factor ** drops


@dataclass
class OptimizerState:
    velocity: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def zeros_like(cls, params) -> "OptimizerState":
        return cls({name: np.zeros_like(p) for name, p in params})


def decays(name: str, sched: TrainSchedule) -> bool:
    return sched.decay_all or not name.endswith(NO_DECAY_SUFFIXES)


def sgd_step(params, grads: dict[str, np.ndarray], state: OptimizerState, lr: float,
             sched: TrainSchedule) -> None:
    """One in-place update of every parameter and its velocity.

    v <- momentum * v - lr * (g + wd * p);  p <- p + v
    """
    for name, p in params:
        g = grads[name]
        if not np.isfinite(g).all():
            raise DivergenceError(f"non-finite gradient for {name}")
    for name, p in params:
        g = grads[name]
        v = state.velocity.get(name)
        if v is None:
            v = state.velocity[name] = np.zeros_like(p)
        if v.shape != p.shape:
            raise ValueError(f"velocity for {name} has shape {v.shape}, parameter {p.shape}")
        step = g + sched.weight_decay * p if decays(name, sched) else g
        v *= sched.momentum
        v -= lr * step
        p += v
