import numpy as np
import pytest

from conftest import naive_conv
from eluresnet.gradcheck import check_op, numeric_gradient
from eluresnet.ops import ConvParams, conv2d_backward, conv2d_forward
from eluresnet.tensor import ShapeError

METHODS = ["direct", "im2col"]


@pytest.mark.parametrize("method", METHODS)
def test_all_ones_center(method):
    x = np.ones((1, 1, 3, 3))
    p = ConvParams(np.ones((1, 1, 3, 3)), None, 1, 1)
    out = conv2d_forward(x, p, method)
    assert out.shape == (1, 1, 3, 3)
    assert out[0, 0, 1, 1] == 9.0
    assert np.array_equal(out, naive_conv(x, p.weights, None, 1, 1))


@pytest.mark.parametrize("method", METHODS)
def test_identity_kernel(method):
    x = np.random.default_rng(0).standard_normal((2, 1, 5, 5))
    p = ConvParams(np.ones((1, 1, 1, 1)), None, 1, 0)
    assert np.array_equal(conv2d_forward(x, p, method), x)


@pytest.mark.parametrize("method", METHODS)
def test_stride_two_halves(method):
    x = np.zeros((1, 3, 32, 32), np.float32)
    p = ConvParams(np.zeros((4, 3, 3, 3), np.float32), None, 2, 1)
    assert conv2d_forward(x, p, method).shape == (1, 4, 16, 16)
    assert p.output_hw(32, 32) == (16, 16)


@pytest.mark.parametrize("method", METHODS)
@pytest.mark.parametrize("stride,pad,bias", [(1, 1, True), (2, 1, False), (1, 0, False), (2, 0, True)])
def test_matches_naive_oracle(method, stride, pad, bias):
    rng = np.random.default_rng(stride * 10 + pad)
    x = rng.standard_normal((2, 3, 5, 6))
    w = rng.standard_normal((4, 3, 3, 3))
    b = rng.standard_normal(4) if bias else None
    got = conv2d_forward(x, ConvParams(w, b, stride, pad), method)
    assert np.max(np.abs(got - naive_conv(x, w, b, stride, pad))) < 1e-6


def test_errors():
    p = ConvParams(np.zeros((2, 3, 3, 3)), None, 1, 1)
    with pytest.raises(ShapeError):
        conv2d_forward(np.zeros((1, 2, 4, 4)), p)
    with pytest.raises(ValueError):
        conv2d_forward(np.zeros((1, 3, 4, 4)), ConvParams(p.weights, None, 0, 1))
    with pytest.raises(ShapeError):
        conv2d_backward(np.zeros((1, 3, 4, 4)), p, np.zeros((1, 2, 3, 3)))
    with pytest.raises(ValueError):
        conv2d_forward(np.zeros((1, 3, 4, 4)), p, method="fft")


@pytest.mark.parametrize("method", METHODS)
def test_backward_zero_grad(method):
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 3, 5, 5))
    p = ConvParams(rng.standard_normal((4, 3, 3, 3)), rng.standard_normal(4), 1, 1)
    gx, gw, gb = conv2d_backward(x, p, np.zeros((2, 4, 5, 5)), method)
    assert not gx.any() and not gw.any() and not gb.any()


@pytest.mark.parametrize("method", METHODS)
@pytest.mark.parametrize("stride", [1, 2])
def test_backward_finite_differences(method, stride):
    rng = np.random.default_rng(2 + stride)
    x = rng.standard_normal((2, 3, 5, 5))
    p = ConvParams(rng.standard_normal((4, 3, 3, 3)), rng.standard_normal(4), stride, 1)
    g = rng.standard_normal(conv2d_forward(x, p).shape)
    gx, gw, gb = conv2d_backward(x, p, g, method)

    def f(_):
        return float(np.sum(conv2d_forward(x, p, method) * g))

    for analytic, target in ((gx, x), (gw, p.weights), (gb, p.bias)):
        assert check_op(analytic, numeric_gradient(f, target), 1e-4).passed


@pytest.mark.parametrize("method", METHODS)
def test_backward_linearity(method):
    rng = np.random.default_rng(4)
    x = rng.standard_normal((2, 3, 6, 6))
    p = ConvParams(rng.standard_normal((5, 3, 3, 3)), rng.standard_normal(5), 2, 1)
    g = rng.standard_normal((2, 5, 3, 3))
    one = conv2d_backward(x, p, g, method)
    two = conv2d_backward(x, p, 2 * g, method)
    for a, b in zip(one, two):
        np.testing.assert_allclose(b, 2 * a, rtol=1e-12, atol=1e-12)


def test_paths_agree_in_float32():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((4, 16, 8, 8)).astype(np.float32)
    p = ConvParams(rng.standard_normal((16, 16, 3, 3)).astype(np.float32) * 0.1, None, 1, 1)
    a = conv2d_forward(x, p, "direct")
    b = conv2d_forward(x, p, "im2col")
    assert a.dtype == np.float32
    np.testing.assert_allclose(a, b, atol=1e-5)
