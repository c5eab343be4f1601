import math

import numpy as np
import pytest

from eluresnet.diagnostics import op_reports
from eluresnet.gradcheck import GradCheckReport, check_op, numeric_gradient
from eluresnet.model import BlockVariant, block_backward, block_forward, build_block
from eluresnet.ops import elu_forward
from eluresnet.tensor import Rng


def test_linear_function():
    x = np.random.default_rng(0).standard_normal((2, 3, 2, 2))
    g = numeric_gradient(lambda t: float(np.sum(t)), x)
    assert np.max(np.abs(g - 1)) < 1e-10


def test_quadratic():
    x = np.random.default_rng(1).standard_normal((1, 2, 3, 3))
    g = numeric_gradient(lambda t: 0.5 * float(np.sum(t * t)), x)
    np.testing.assert_allclose(g, x, atol=1e-9)


def test_elu_sum():
    x = np.array([-1.0, 2.0]).reshape(1, 1, 1, 2)
    g = numeric_gradient(lambda t: float(np.sum(elu_forward(t))), x)
    np.testing.assert_allclose(g.ravel(), [math.exp(-1), 1.0], atol=1e-6)


def test_input_restored():
    x = np.random.default_rng(2).standard_normal((1, 1, 2, 2))
    before = x.copy()
    numeric_gradient(lambda t: float(np.sum(t ** 3)), x)
    assert np.array_equal(x, before)


def test_errors():
    x = np.zeros((1, 1, 1, 2))
    with pytest.raises(ValueError):
        numeric_gradient(lambda t: 0.0, x, h=0)
    with pytest.raises(FloatingPointError), np.errstate(invalid="ignore", divide="ignore"):
        numeric_gradient(lambda t: float(np.log(t[0, 0, 0, 0])), x)


def test_check_op():
    a = np.random.default_rng(3).standard_normal(5)
    r = check_op(a, a.copy())
    assert r.max_rel_error == 0 and r.passed
    r = check_op(np.array([1.0]), np.array([1.0 + 1e-3]), tol=1e-4)
    assert not r.passed and r.max_rel_error == pytest.approx(1e-3 / (1 + 1e-3))
    r = check_op(np.array([0.0, 2.0, 1.0]), np.array([0.0, 2.0, 1.1]), op_name="x")
    assert r.worst_index == 2
    assert isinstance(r, GradCheckReport) and r.passed == (r.max_rel_error <= 1e-4)


def test_every_primitive_passes():
    reports = op_reports(seed=1)
    assert len(reports) >= 9
    assert all(r.passed for r in reports), [r.line() for r in reports if not r.passed]


@pytest.mark.parametrize("variant", list(BlockVariant))
def test_two_block_chain_rule(variant):
    # block 2->2 then block 2->4 (stride 2), scalar loss <g, output>
    rng = Rng((4, 1))
    blocks = [build_block(variant, 2, 2, 1, rng, dtype=np.float64),
              build_block(variant, 2, 4, 2, rng, dtype=np.float64)]
    x = rng.normal((2, 2, 6, 6))
    g = rng.normal((2, 4, 3, 3))

    def run(inp):
        caches = []
        h = inp
        for b in blocks:
            h, c = block_forward(b, h, "train", update_stats=False)
            caches.append(c)
        return h, caches

    def loss(_):
        return float(np.sum(run(x)[0] * g))

    _, caches = run(x)
    grad = g
    layer_grads = []
    for b, c in zip(reversed(blocks), reversed(caches)):
        grad, lg = block_backward(b, c, grad)
        layer_grads.append((b, lg))
    assert check_op(grad, numeric_gradient(loss, x)).passed
    for b, lg in layer_grads:
        for layer, grads in zip(b.branch, lg):
            for name, arr in layer.params():
                assert check_op(grads[name], numeric_gradient(loss, arr)).passed, name
