"""Central finite-difference oracle for certifying backward passes."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

STEP = 1e-5
TOLERANCE = 1e-4


@dataclass
class GradCheckReport:
    op_name: str
    max_rel_error: float
    worst_index: int
    passed: bool
    step_size: float = STEP

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.op_name:<32} max_rel_error={self.max_rel_error:.3e} "
                f"worst_index={self.worst_index} h={self.step_size:g}")


def numeric_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = STEP) -> np.ndarray:
    """Central differences of scalar ``f`` at ``x``, one coordinate at a time.

    ``x`` is perturbed in place and restored, so ``f`` may close over it.
    """
    if h <= 0:
        raise ValueError(f"step must be positive, got {h}")
    grad = np.zeros(x.shape, dtype=np.float64)
    flat = x.reshape(-1)
    if not np.shares_memory(flat, x):
        raise ValueError("numeric_gradient needs a contiguous array")
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise FloatingPointError(f"non-finite function value at coordinate {i}")
        g[i] = (fp - fm) / (2 * h)
    return grad


def check_op(analytic: np.ndarray, numeric: np.ndarray, tol: float = TOLERANCE,
             op_name: str = "op", step: float = STEP) -> GradCheckReport:
    """Elementwise relative error |a - n| / max(|a|, |n|, 1e-8), worst entry reported."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.shape != n.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {n.shape}")
    if a.size == 0:
        return GradCheckReport(op_name, 0.0, -1, True, step)
    rel = np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
    worst = int(np.argmax(rel))
    err = float(rel.reshape(-1)[worst])
    return GradCheckReport(op_name, err, worst, err <= tol, step)


def merge_reports(op_name: str, reports: list[GradCheckReport]) -> GradCheckReport:
    """Collapse per-tensor reports into one line; worst_index refers to the worst tensor."""
    worst = max(reports, key=lambda r: r.max_rel_error)
    return GradCheckReport(op_name, worst.max_rel_error, worst.worst_index,
                           all(r.passed for r in reports), worst.step_size)
