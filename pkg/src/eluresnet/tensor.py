"""Rank-4 NCHW tensors and a seeded random source.

Tensors are plain ``numpy.ndarray`` objects of rank 4. The helpers here
validate shapes and keep every elementwise op pure (inputs never modified).
Training paths run in float32; gradient checking switches to float64.
"""
from __future__ import annotations

import sys

import numpy as np

TRAIN_DTYPE = np.float32
CHECK_DTYPE = np.float64


class ShapeError(ValueError):
    """Operand dimensions do not satisfy an op's contract."""


def _check_dims(dims) -> tuple[int, int, int, int]:
    dims = tuple(int(d) for d in dims)
    if len(dims) != 4:
        raise ShapeError(f"expected 4 extents (N, C, H, W), got {dims}")
    if any(d < 0 for d in dims):
        raise ShapeError(f"negative extent in {dims}")
    total = 1
    for d in dims:
        total *= d
    if total > sys.maxsize // 8:
        raise OverflowError(f"{dims} has {total} entries, beyond addressable size")
    return dims


def as_tensor4(x, dtype=None) -> np.ndarray:
    """Return ``x`` as a C-contiguous rank-4 array (copying only if needed)."""
    arr = np.ascontiguousarray(x, dtype=dtype)
    if arr.ndim != 4:
        raise ShapeError(f"expected rank-4 tensor, got shape {arr.shape}")
    return arr


def zeros(dims, dtype=TRAIN_DTYPE) -> np.ndarray:
    return np.zeros(_check_dims(dims), dtype=dtype)


def flat_index(dims, n: int, c: int, h: int, w: int) -> int:
    """Row-major offset of element (n, c, h, w) in a tensor of extents ``dims``."""
    _, C, H, W = _check_dims(dims)
    return ((n * C + c) * H + h) * W + w


class Rng:
    """Seeded Gaussian/uniform source.

    Wraps numpy's PCG64 generator, whose stream is stable across platforms and
    releases for a fixed seed, so identical seeds and call sequences give
    identical tensors.
    """

    def __init__(self, seed: int | tuple[int, ...]):
        self.seed = seed
        entropy = list(seed) if isinstance(seed, tuple) else int(seed)
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))

    def spawn(self, *key: int) -> "Rng":
        """Independent child stream keyed by integers (e.g. epoch number)."""
        base = self.seed if isinstance(self.seed, tuple) else (int(self.seed),)
        return Rng(tuple(base) + tuple(int(k) for k in key))

    def normal(self, size, mean=0.0, stddev=1.0) -> np.ndarray:
        return self._gen.normal(mean, stddev, size=size)

    def integers(self, low, high, size=None) -> np.ndarray:
        return self._gen.integers(low, high, size=size)

    def random(self, size=None) -> np.ndarray:
        return self._gen.random(size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)


def randn(dims, mean: float, stddev: float, rng: Rng, dtype=TRAIN_DTYPE) -> np.ndarray:
    """I.i.d. Gaussian samples of shape ``dims``."""
    if stddev < 0:
        raise ValueError(f"stddev must be non-negative, got {stddev}")
    dims = _check_dims(dims)
    return rng.normal(dims, mean, stddev).astype(dtype)


def _same_dims(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"dims mismatch: {a.shape} vs {b.shape}")


def add(a, b):
    _same_dims(a, b)
    return a + b


def sub(a, b):
    _same_dims(a, b)
    return a - b


def hadamard(a, b):
    _same_dims(a, b)
    return a * b


def scale(a, k: float):
    return a * a.dtype.type(k)


def total(a) -> float:
    """Sum of all entries, accumulated in double precision."""
    return float(np.sum(a, dtype=np.float64))


def maximum(a) -> float:
    return float(np.max(a))


def all_finite(a) -> bool:
    return bool(np.isfinite(a).all())
