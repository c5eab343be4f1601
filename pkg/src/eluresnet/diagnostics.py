"""Gradient certification suite and initialization moment profiles."""
from __future__ import annotations

import numpy as np

from eluresnet.gradcheck import GradCheckReport, check_op, merge_reports, numeric_gradient
from eluresnet.model import (
    BlockVariant,
    NetworkConfig,
    activation_moment_profile,
    backward,
    build_network,
    forward,
    growth_ratio,
    shortcut_apply,
    shortcut_backward,
)
from eluresnet.ops import (
    BatchNormState,
    ConvParams,
    batchnorm_backward,
    batchnorm_forward,
    conv2d_backward,
    conv2d_forward,
    elu_backward,
    elu_forward,
    fully_connected_backward,
    fully_connected_forward,
    global_avg_pool_backward,
    global_avg_pool_forward,
    relu_backward,
    relu_forward,
    softmax_cross_entropy,
)
from eluresnet.tensor import Rng

KINK_MARGIN = 1e-3


def _check_all(name, pairs) -> GradCheckReport:
    return merge_reports(name, [check_op(a, n, op_name=name) for a, n in pairs])


def _weighted(out_shape, rng):
    # random upstream gradient turns any op into a scalar loss <g, op(x)>
    return rng.normal(out_shape)


def op_reports(seed: int = 0) -> list[GradCheckReport]:
    """Finite-difference checks of every primitive backward, double precision."""
    rng = Rng((seed, 7))
    reports = []

    for stride, bias in ((1, True), (2, False)):
        x = rng.normal((2, 3, 5, 5))
        p = ConvParams(rng.normal((4, 3, 3, 3)), rng.normal(4) if bias else None, stride, 1)
        g = _weighted(conv2d_forward(x, p).shape, rng)
        gx, gw, gb = conv2d_backward(x, p, g)

        def f(_):
            return float(np.sum(conv2d_forward(x, p) * g))
        pairs = [(gx, numeric_gradient(f, x)), (gw, numeric_gradient(f, p.weights))]
        if bias:
            pairs.append((gb, numeric_gradient(f, p.bias)))
        reports.append(_check_all(f"conv2d stride={stride}", pairs))

    x = rng.normal((3, 4, 6, 6)) * 2 + 1
    s = BatchNormState(rng.normal(4), rng.normal(4), np.zeros(4), np.ones(4))
    g = _weighted(x.shape, rng)
    gx, gg, gb = batchnorm_backward(x, s, g)

    def f(_):
        return float(np.sum(batchnorm_forward(x, s)[0] * g))
    reports.append(_check_all("batchnorm", [(gx, numeric_gradient(f, x)),
                                            (gg, numeric_gradient(f, s.gamma)),
                                            (gb, numeric_gradient(f, s.beta))]))

    x = rng.normal((3, 4, 6, 6)) * 2
    g = _weighted(x.shape, rng)
    reports.append(check_op(elu_backward(x, 1.0, g),
                            numeric_gradient(lambda _: float(np.sum(elu_forward(x, 1.0) * g)), x),
                            op_name="elu"))
    xr = rng.normal((3, 4, 6, 6))
    xr[np.abs(xr) < KINK_MARGIN] += 2 * KINK_MARGIN
    reports.append(check_op(relu_backward(xr, g),
                            numeric_gradient(lambda _: float(np.sum(relu_forward(xr) * g)), xr),
                            op_name="relu"))

    gp = _weighted((3, 4, 1, 1), rng)
    reports.append(check_op(
        global_avg_pool_backward(x.shape, gp),
        numeric_gradient(lambda _: float(np.sum(global_avg_pool_forward(x) * gp)), x),
        op_name="global_avg_pool"))

    feats = rng.normal((3, 4, 1, 1))
    w, b = rng.normal((5, 4)), rng.normal(5)
    g = _weighted((3, 5), rng)
    gx, gw, gb = fully_connected_backward(feats, w, g)

    def f(_):
        return float(np.sum(fully_connected_forward(feats, w, b) * g))
    reports.append(_check_all("fully_connected", [(gx, numeric_gradient(f, feats)),
                                                  (gw, numeric_gradient(f, w)),
                                                  (gb, numeric_gradient(f, b))]))

    logits = rng.normal((4, 10))
    labels = np.array([0, 3, 9, 3])
    _, gl = softmax_cross_entropy(logits, labels)
    reports.append(check_op(
        gl, numeric_gradient(lambda z: softmax_cross_entropy(z, labels)[0], logits),
        op_name="softmax_cross_entropy"))

    x = rng.normal((2, 2, 6, 6))
    g = _weighted((2, 4, 3, 3), rng)
    reports.append(check_op(
        shortcut_backward(g, x.shape, 2),
        numeric_gradient(lambda _: float(np.sum(shortcut_apply(x, 2, 4, 2) * g)), x),
        op_name="shortcut"))
    return reports


def network_report(variant, seed: int = 0, n: int = 1, widths=(2, 4, 8), batch: int = 2,
                   size: int = 8, classes: int = 10) -> GradCheckReport:
    """End-to-end loss gradient of a small 6n+2 network wrt every parameter and the input.

    BN running statistics are frozen so the loss is a function of the batch only.
    """
    cfg = NetworkConfig(n=n, classes=classes, variant=variant, widths=widths)
    net = build_network(cfg, Rng((seed, 11)), dtype=np.float64)
    rng = Rng((seed, 12))
    x = rng.normal((batch, 3, size, size))
    labels = rng.integers(0, classes, size=batch)

    def loss(_):
        logits, _c = forward(net, x, "train", update_stats=False)
        return softmax_cross_entropy(logits, labels)[0]

    logits, cache = forward(net, x, "train", update_stats=False)
    grads = backward(net, cache, softmax_cross_entropy(logits, labels)[1])
    reports = [check_op(grads[name], numeric_gradient(loss, a), op_name=name)
               for name, a in net.parameters()]
    reports.append(check_op(grads["input"], numeric_gradient(loss, x), op_name="input"))
    return merge_reports(f"network depth={cfg.depth} variant={BlockVariant(variant).value}", reports)


def run_gradcheck_suite(seed: int = 0) -> list[GradCheckReport]:
    reports = op_reports(seed)
    reports += [network_report(v, seed) for v in BlockVariant]
    return reports


def moment_profiles(variant, n: int, seeds=(0, 1, 2, 3, 4), batch: int = 8) -> list[np.ndarray]:
    """Per-block second moments of freshly initialized networks, one profile per seed."""
    out = []
    for seed in seeds:
        net = build_network(NetworkConfig(n=n, variant=variant), Rng((seed, 0)))
        x = Rng((seed, 2)).normal((batch, 3, 32, 32)).astype(np.float32)
        out.append(activation_moment_profile(net, x))
    return out


def median_growth(profiles: list[np.ndarray]) -> float:
    return float(np.median([growth_ratio(p) for p in profiles]))
