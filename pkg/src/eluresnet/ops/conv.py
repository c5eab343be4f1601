"""2-D cross-correlation with zero padding, forward and backward.

Two interchangeable paths are provided: ``direct`` accumulates one matrix
product per kernel tap, ``im2col`` unrolls receptive fields into a patch
matrix and does a single product. Both must agree to 1e-6.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from eluresnet.tensor import ShapeError


@dataclass
class ConvParams:
    weights: np.ndarray  # (outC, inC, kH, kW)
    bias: np.ndarray | None = None  # (outC,)
    stride: int = 1
    pad: int = 1

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    def output_hw(self, h: int, w: int) -> tuple[int, int]:
        kh, kw = self.weights.shape[2:]
        return ((h + 2 * self.pad - kh) // self.stride + 1,
                (w + 2 * self.pad - kw) // self.stride + 1)


def _validate(x: np.ndarray, p: ConvParams) -> tuple[int, int]:
    if p.stride < 1:
        raise ValueError(f"stride must be positive, got {p.stride}")
    if p.pad < 0:
        raise ValueError(f"pad must be non-negative, got {p.pad}")
    if x.ndim != 4:
        raise ShapeError(f"expected NCHW input, got shape {x.shape}")
    if x.shape[1] != p.in_channels:
        raise ShapeError(f"input has {x.shape[1]} channels, kernel expects {p.in_channels}")
    oh, ow = p.output_hw(x.shape[2], x.shape[3])
    if oh < 1 or ow < 1:
        raise ShapeError(f"kernel larger than padded input {x.shape}")
    return oh, ow


def _pad(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def _tap(xp: np.ndarray, i: int, j: int, stride: int, oh: int, ow: int) -> np.ndarray:
    # input window seen by kernel tap (i, j) at every output position
    return xp[:, :, i:i + stride * (oh - 1) + 1:stride, j:j + stride * (ow - 1) + 1:stride]


def _patches(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    # (N*OH*OW, C*kH*kW) patch matrix
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    n, c, oh, ow = win.shape[:4]
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * kh * kw)


def _padded_cnhw(x: np.ndarray, pad: int) -> np.ndarray:
    n, c, h, w = x.shape
    xp = np.zeros((c, n, h + 2 * pad, w + 2 * pad), dtype=x.dtype)
    xp[:, :, pad:pad + h, pad:pad + w] = x.transpose(1, 0, 2, 3)
    return xp


def _shifted_forward(x, p, oh, ow):
    # Stride-1 taps are contiguous column shifts of the flattened padded
    # (C, N*Hp*Wp) input, so each tap is one BLAS call on a view. Outputs are
    # computed on the whole padded grid and cropped afterwards.
    n = x.shape[0]
    o, c, kh, kw = p.weights.shape
    xp = _padded_cnhw(x, p.pad)
    hp, wp = xp.shape[2:]
    flat = xp.reshape(c, -1)
    span = flat.shape[1] - ((kh - 1) * wp + kw - 1)
    wt = np.ascontiguousarray(p.weights.transpose(2, 3, 0, 1))
    acc = np.zeros((o, n * hp * wp), dtype=np.result_type(x, p.weights))
    view = acc[:, :span]
    for i in range(kh):
        for j in range(kw):
            off = i * wp + j
            view += wt[i, j] @ flat[:, off:off + span]
    return acc.reshape(o, n, hp, wp)[:, :, :oh, :ow].transpose(1, 0, 2, 3)


def _shifted_backward(x, p, grad_out, oh, ow):
    n, c, h, w = x.shape
    o, _, kh, kw = p.weights.shape
    xp = _padded_cnhw(x, p.pad)
    hp, wp = xp.shape[2:]
    flat = xp.reshape(c, -1)
    span = flat.shape[1] - ((kh - 1) * wp + kw - 1)
    g = np.zeros((o, n, hp, wp), dtype=grad_out.dtype)
    g[:, :, :oh, :ow] = grad_out.transpose(1, 0, 2, 3)
    gf = g.reshape(o, -1)[:, :span]
    wt = np.ascontiguousarray(p.weights.transpose(2, 3, 1, 0))
    grad_w = np.empty((kh, kw, o, c), dtype=np.result_type(p.weights, grad_out))
    dflat = np.zeros(flat.shape, dtype=np.result_type(x, grad_out))
    for i in range(kh):
        for j in range(kw):
            off = i * wp + j
            grad_w[i, j] = gf @ flat[:, off:off + span].T
            dflat[:, off:off + span] += wt[i, j] @ gf
    pad = p.pad
    grad_x = dflat.reshape(c, n, hp, wp)[:, :, pad:pad + h, pad:pad + w].transpose(1, 0, 2, 3)
    return grad_x, grad_w.transpose(2, 3, 0, 1)


def _gathered_forward(x, p, oh, ow):
    n = x.shape[0]
    o, c, kh, kw = p.weights.shape
    xp = _pad(x, p.pad)
    wt = np.ascontiguousarray(p.weights.transpose(2, 3, 0, 1))
    acc = np.zeros((o, n * oh * ow), dtype=np.result_type(x, p.weights))
    for i in range(kh):
        for j in range(kw):
            tap = _tap(xp, i, j, p.stride, oh, ow).transpose(1, 0, 2, 3).reshape(c, -1)
            acc += wt[i, j] @ tap
    return acc.reshape(o, n, oh, ow).transpose(1, 0, 2, 3)


def _gathered_backward(x, p, grad_out, oh, ow):
    n, c, h, w = x.shape
    o, _, kh, kw = p.weights.shape
    s = p.stride
    xp = _pad(x, p.pad)
    gf = np.ascontiguousarray(grad_out.transpose(1, 0, 2, 3)).reshape(o, -1)
    wt = np.ascontiguousarray(p.weights.transpose(2, 3, 1, 0))
    grad_w = np.empty((kh, kw, o, c), dtype=np.result_type(p.weights, grad_out))
    dxp = np.zeros(xp.shape, dtype=np.result_type(x, grad_out))
    for i in range(kh):
        for j in range(kw):
            tap = _tap(xp, i, j, s, oh, ow).transpose(1, 0, 2, 3).reshape(c, -1)
            grad_w[i, j] = gf @ tap.T
            dxp[:, :, i:i + s * (oh - 1) + 1:s, j:j + s * (ow - 1) + 1:s] += \
                (wt[i, j] @ gf).reshape(c, n, oh, ow).transpose(1, 0, 2, 3)
    grad_x = dxp[:, :, p.pad:p.pad + h, p.pad:p.pad + w] if p.pad else dxp
    return grad_x, grad_w.transpose(2, 3, 0, 1)


def conv2d_forward(x: np.ndarray, p: ConvParams, method: str = "direct") -> np.ndarray:
    oh, ow = _validate(x, p)
    n = x.shape[0]
    o, c, kh, kw = p.weights.shape
    if method == "im2col":
        cols = _patches(_pad(x, p.pad), kh, kw, p.stride)
        out = cols @ p.weights.reshape(o, -1).T
        out = out.reshape(n, oh, ow, o).transpose(0, 3, 1, 2)
    elif method == "direct":
        out = (_shifted_forward if p.stride == 1 else _gathered_forward)(x, p, oh, ow)
    else:
        raise ValueError(f"unknown conv method {method!r}")
    if p.bias is not None:
        out = out + p.bias.reshape(1, o, 1, 1)
    return np.ascontiguousarray(out)


def conv2d_backward(x: np.ndarray, p: ConvParams, grad_out: np.ndarray, method: str = "direct"):
    """Gradients of the forward map.

    Returns ``(grad_x, grad_weights, grad_bias)``; ``grad_bias`` is None when
    the layer has no bias.
    """
    oh, ow = _validate(x, p)
    n, c, h, w = x.shape
    o, _, kh, kw = p.weights.shape
    if grad_out.shape != (n, o, oh, ow):
        raise ShapeError(f"grad_out has shape {grad_out.shape}, expected {(n, o, oh, ow)}")
    if method == "im2col":
        s = p.stride
        xp = _pad(x, p.pad)
        g = grad_out.transpose(0, 2, 3, 1).reshape(n * oh * ow, o)
        cols = _patches(xp, kh, kw, s)
        grad_w = (g.T @ cols).reshape(p.weights.shape)
        dcols = (g @ p.weights.reshape(o, -1)).reshape(n, oh, ow, c, kh, kw)
        dxp = np.zeros(xp.shape, dtype=np.result_type(x, grad_out))
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i:i + s * (oh - 1) + 1:s, j:j + s * (ow - 1) + 1:s] += \
                    dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        grad_x = dxp[:, :, p.pad:p.pad + h, p.pad:p.pad + w] if p.pad else dxp
    elif method == "direct":
        backward = _shifted_backward if p.stride == 1 else _gathered_backward
        grad_x, grad_w = backward(x, p, grad_out, oh, ow)
    else:
        raise ValueError(f"unknown conv method {method!r}")
    grad_b = grad_out.sum(axis=(0, 2, 3)) if p.bias is not None else None
    return np.ascontiguousarray(grad_x), np.ascontiguousarray(grad_w), grad_b
