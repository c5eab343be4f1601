"""Per-channel batch normalization over (N, H, W)."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from eluresnet.tensor import ShapeError

EPSILON = 1e-5
MOMENTUM = 0.1


@dataclass
class BatchNormState:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = EPSILON
    momentum: float = MOMENTUM
    mode: str = "train"

    @classmethod
    def fresh(cls, channels: int, dtype=np.float32) -> "BatchNormState":
        return cls(gamma=np.ones(channels, dtype), beta=np.zeros(channels, dtype),
                   running_mean=np.zeros(channels, dtype), running_var=np.ones(channels, dtype))

    def with_mode(self, mode: str) -> "BatchNormState":
        if mode not in ("train", "infer"):
            raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
        return replace(self, mode=mode)


def _bcast(v: np.ndarray) -> np.ndarray:
    return v.reshape(1, -1, 1, 1)


def _batch_stats(x: np.ndarray):
    pool = x.shape[0] * x.shape[2] * x.shape[3]
    if pool < 2:
        raise ValueError("batch statistics need at least 2 values per channel")
    mean = x.mean(axis=(0, 2, 3))
    var = ((x - _bcast(mean)) ** 2).mean(axis=(0, 2, 3))
    return mean, var


def _check(x: np.ndarray, s: BatchNormState) -> None:
    if x.ndim != 4 or x.shape[1] != s.gamma.shape[0]:
        raise ShapeError(f"input {x.shape} does not match {s.gamma.shape[0]} BN channels")


def batchnorm_forward(x: np.ndarray, s: BatchNormState):
    """Normalize ``x``; returns ``(y, new_state)``.

    Train mode uses the biased batch variance for both normalization and the
    running update (new = (1 - momentum) * old + momentum * batch). Infer mode
    uses running statistics and returns the state unchanged.
    """
    _check(x, s)
    if s.mode == "train":
        mean, var = _batch_stats(x)
        m = s.momentum
        new_state = replace(
            s,
            running_mean=((1 - m) * s.running_mean + m * mean).astype(s.running_mean.dtype),
            running_var=((1 - m) * s.running_var + m * var).astype(s.running_var.dtype),
        )
    else:
        mean, var = s.running_mean, s.running_var
        new_state = s
    inv_std = 1.0 / np.sqrt(var + s.epsilon)
    y = (x - _bcast(mean)) * _bcast(inv_std * s.gamma) + _bcast(s.beta)
    return y.astype(x.dtype, copy=False), new_state


def batchnorm_backward(x: np.ndarray, s: BatchNormState, grad_out: np.ndarray):
    """Exact train-mode gradient, including the batch-statistics dependence on ``x``.

    Returns ``(grad_x, grad_gamma, grad_beta)``.
    """
    if s.mode != "train":
        raise ValueError("batchnorm_backward requires train-mode state")
    _check(x, s)
    if grad_out.shape != x.shape:
        raise ShapeError(f"grad_out {grad_out.shape} does not match input {x.shape}")
    mean, var = _batch_stats(x)
    inv_std = 1.0 / np.sqrt(var + s.epsilon)
    xhat = (x - _bcast(mean)) * _bcast(inv_std)
    grad_beta = grad_out.sum(axis=(0, 2, 3))
    grad_gamma = (grad_out * xhat).sum(axis=(0, 2, 3))
    m = x.shape[0] * x.shape[2] * x.shape[3]
    grad_x = _bcast(s.gamma * inv_std / m) * (
        m * grad_out - _bcast(grad_beta) - xhat * _bcast(grad_gamma))
    return grad_x.astype(x.dtype, copy=False), grad_gamma, grad_beta
