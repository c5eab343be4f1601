"""ELU and ReLU, elementwise."""
from __future__ import annotations

import numpy as np


def elu_forward(x: np.ndarray, alpha: float = 1.0) -> np.ndarray:
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    # clamp the exp argument so large positive entries cannot overflow the unused branch
    neg = alpha * np.expm1(np.minimum(x, 0))
    return np.where(x > 0, x, neg).astype(x.dtype, copy=False)


def elu_backward(x: np.ndarray, alpha: float, grad_out: np.ndarray) -> np.ndarray:
    # derivative at exactly 0 comes from the negative branch: alpha * e^0
    slope = np.where(x > 0, 1.0, alpha * np.exp(np.minimum(x, 0)))
    return (grad_out * slope).astype(grad_out.dtype, copy=False)


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    return np.where(x > 0, grad_out, 0).astype(grad_out.dtype, copy=False)
