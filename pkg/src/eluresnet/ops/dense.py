"""Classifier head: global average pooling, fully-connected layer, softmax loss."""
from __future__ import annotations

import numpy as np

from eluresnet.tensor import ShapeError


def global_avg_pool_forward(x: np.ndarray) -> np.ndarray:
    if x.ndim != 4 or x.shape[2] < 1 or x.shape[3] < 1:
        raise ShapeError(f"global pooling needs a non-empty spatial extent, got {x.shape}")
    return x.mean(axis=(2, 3), keepdims=True)


def global_avg_pool_backward(x_shape, grad_out: np.ndarray) -> np.ndarray:
    n, c, h, w = x_shape
    if h < 1 or w < 1:
        raise ShapeError(f"global pooling needs a non-empty spatial extent, got {x_shape}")
    if grad_out.shape != (n, c, 1, 1):
        raise ShapeError(f"grad_out {grad_out.shape} does not match pooled shape {(n, c, 1, 1)}")
    return np.broadcast_to(grad_out / (h * w), (n, c, h, w)).copy()


def fully_connected_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Affine map of pooled features (N, C, 1, 1) to logits (N, classes)."""
    flat = x.reshape(x.shape[0], -1)
    if flat.shape[1] != weights.shape[1]:
        raise ShapeError(f"features of length {flat.shape[1]} vs weights {weights.shape}")
    if bias.shape != (weights.shape[0],):
        raise ShapeError(f"bias {bias.shape} vs weights {weights.shape}")
    return flat @ weights.T + bias


def fully_connected_backward(x: np.ndarray, weights: np.ndarray, grad_out: np.ndarray):
    """Returns ``(grad_x, grad_weights, grad_bias)``; ``grad_x`` has the shape of ``x``."""
    flat = x.reshape(x.shape[0], -1)
    if grad_out.shape != (flat.shape[0], weights.shape[0]):
        raise ShapeError(f"grad_out {grad_out.shape} vs logits {(flat.shape[0], weights.shape[0])}")
    grad_x = (grad_out @ weights).reshape(x.shape)
    return grad_x, grad_out.T @ flat, grad_out.sum(axis=0)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean negative log-likelihood and its gradient with respect to ``logits``."""
    labels = np.asarray(labels)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"labels {labels.shape} vs batch of {n}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"labels must lie in [0, {k})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_z
    rows = np.arange(n)
    loss = -float(np.mean(log_p[rows, labels], dtype=np.float64))
    grad = np.exp(log_p)
    grad[rows, labels] -= 1
    return loss, grad / n
