"""Residual networks for 32x32 inputs in the baseline and four ELU block variants.

The network is a 3x3 stem convolution, three stages of ``n`` residual blocks
on feature maps of 32, 16 and 8 pixels with 16, 32 and 64 filters, global
average pooling and a fully-connected classifier: 6n + 2 weighted layers.
"""
from __future__ import annotations

import copy
import enum
import math
from dataclasses import dataclass, field

import numpy as np

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
)
from eluresnet.tensor import Rng, ShapeError

STAGE_WIDTHS = (16, 32, 64)
CONV_METHOD = "direct"


class DivergenceError(FloatingPointError):
    """Activations, loss or gradients became non-finite."""


class BlockVariant(str, enum.Enum):
    BASELINE = "baseline"  # Conv-BN-ReLU-Conv-BN, ReLU after addition
    CONV_ELU_CONV_ELU = "a"
    ELU_CONV_ELU_CONV = "b"  # full pre-activation
    CONV_ELU_CONV_BN_ELU_AFTER_ADD = "c"
    CONV_ELU_CONV_BN = "d"  # no activation after addition

    @property
    def uses_elu(self) -> bool:
        return self is not BlockVariant.BASELINE


@dataclass
class NetworkConfig:
    n: int = 3
    classes: int = 10
    variant: BlockVariant = BlockVariant.CONV_ELU_CONV_BN
    alpha: float = 1.0
    head_elu: bool | None = None  # None: on for ELU variants, off for baseline
    widths: tuple[int, int, int] = STAGE_WIDTHS
    in_channels: int = 3

    def __post_init__(self):
        self.variant = BlockVariant(self.variant)
        if self.n < 1:
            raise ValueError(f"n must be at least 1, got {self.n}")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.head_elu is None:
            self.head_elu = self.variant.uses_elu
        self.widths = tuple(int(w) for w in self.widths)

    @property
    def depth(self) -> int:
        return 6 * self.n + 2


# ---------------------------------------------------------------- layers

class Conv:
    weighted = True

    def __init__(self, params: ConvParams):
        self.p = params

    def params(self):
        out = [("weights", self.p.weights)]
        if self.p.bias is not None:
            out.append(("bias", self.p.bias))
        return out

    def buffers(self):
        return []

    def forward(self, x, mode, update_stats):
        return conv2d_forward(x, self.p, CONV_METHOD), x

    def backward(self, x, g):
        gx, gw, gb = conv2d_backward(x, self.p, g, CONV_METHOD)
        grads = {"weights": gw}
        if gb is not None:
            grads["bias"] = gb
        return gx, grads

    def cast(self, dtype):
        self.p.weights = self.p.weights.astype(dtype)
        if self.p.bias is not None:
            self.p.bias = self.p.bias.astype(dtype)


class BatchNorm:
    weighted = False

    def __init__(self, state: BatchNormState):
        self.state = state

    def params(self):
        return [("gamma", self.state.gamma), ("beta", self.state.beta)]

    def buffers(self):
        return [("running_mean", self.state.running_mean), ("running_var", self.state.running_var)]

    def set_buffer(self, name, value):
        setattr(self.state, name, value)

    def forward(self, x, mode, update_stats):
        y, new_state = batchnorm_forward(x, self.state.with_mode(mode))
        if mode == "train" and update_stats:
            self.state.running_mean = new_state.running_mean
            self.state.running_var = new_state.running_var
        return y, x

    def backward(self, x, g):
        gx, gg, gb = batchnorm_backward(x, self.state.with_mode("train"), g)
        return gx, {"gamma": gg, "beta": gb}

    def cast(self, dtype):
        s = self.state
        for name in ("gamma", "beta", "running_mean", "running_var"):
            setattr(s, name, getattr(s, name).astype(dtype))


class Elu:
    weighted = False

    def __init__(self, alpha: float = 1.0):
        self.alpha = alpha

    def params(self):
        return []

    def buffers(self):
        return []

    def forward(self, x, mode, update_stats):
        return elu_forward(x, self.alpha), x

    def backward(self, x, g):
        return elu_backward(x, self.alpha, g), {}

    def cast(self, dtype):
        pass


class Relu(Elu):
    def __init__(self):
        super().__init__()

    def forward(self, x, mode, update_stats):
        return relu_forward(x), x

    def backward(self, x, g):
        return relu_backward(x, g), {}


def _he_conv(in_ch, out_ch, stride, bias, rng, dtype=np.float32):
    std = math.sqrt(2.0 / (3 * 3 * out_ch))
    w = rng.normal((out_ch, in_ch, 3, 3), 0.0, std).astype(dtype)
    b = np.zeros(out_ch, dtype) if bias else None
    return Conv(ConvParams(w, b, stride=stride, pad=1))


# ---------------------------------------------------------------- blocks

def shortcut_apply(x: np.ndarray, in_ch: int, out_ch: int, stride: int) -> np.ndarray:
    """Parameter-free shortcut: identity, or stride subsampling plus zero channels."""
    if out_ch < in_ch:
        raise ShapeError(f"shortcut cannot shrink channels ({in_ch} -> {out_ch})")
    if x.shape[1] != in_ch:
        raise ShapeError(f"input has {x.shape[1]} channels, expected {in_ch}")
    if out_ch == in_ch and stride == 1:
        return x
    sub = x[:, :, ::stride, ::stride]
    out = np.zeros((x.shape[0], out_ch) + sub.shape[2:], dtype=x.dtype)
    out[:, :in_ch] = sub
    return out


def shortcut_backward(grad_out: np.ndarray, x_shape, stride: int) -> np.ndarray:
    in_ch = x_shape[1]
    if grad_out.shape[1] == in_ch and stride == 1:
        return grad_out
    gx = np.zeros(x_shape, dtype=grad_out.dtype)
    gx[:, :, ::stride, ::stride] = grad_out[:, :in_ch]
    return gx


@dataclass
class ResBlock:
    variant: BlockVariant
    in_ch: int
    out_ch: int
    stride: int
    branch: list
    post: Elu | None

    @property
    def convs(self) -> list[Conv]:
        return [layer for layer in self.branch if isinstance(layer, Conv)]

    @property
    def conv1(self) -> ConvParams:
        return self.convs[0].p

    @property
    def conv2(self) -> ConvParams:
        return self.convs[1].p

    @property
    def norms(self) -> list[BatchNorm]:
        return [layer for layer in self.branch if isinstance(layer, BatchNorm)]

    @property
    def shortcut(self) -> str:
        return "identity" if (self.in_ch == self.out_ch and self.stride == 1) else "subsample-zero-pad"

    def named_layers(self):
        names, counts = [], {}
        for layer in self.branch:
            kind = {Conv: "conv", BatchNorm: "bn"}.get(type(layer))
            if kind is None:
                names.append((None, layer))
                continue
            counts[kind] = counts.get(kind, 0) + 1
            names.append((f"{kind}{counts[kind]}", layer))
        return names


def build_block(variant, in_ch: int, out_ch: int, stride: int, rng: Rng,
                alpha: float = 1.0, dtype=np.float32) -> ResBlock:
    variant = BlockVariant(variant)
    if stride not in (1, 2):
        raise ValueError(f"stride must be 1 or 2, got {stride}")
    if out_ch < in_ch or (stride == 1 and in_ch != out_ch):
        raise ValueError(f"invalid block {in_ch}->{out_ch} with stride {stride}")

    def bn():
        return BatchNorm(BatchNormState.fresh(out_ch, dtype))

    V = BlockVariant
    if variant is V.BASELINE:
        branch = [_he_conv(in_ch, out_ch, stride, False, rng, dtype), bn(), Relu(),
                  _he_conv(out_ch, out_ch, 1, False, rng, dtype), bn()]
        post = Relu()
    elif variant is V.CONV_ELU_CONV_ELU:
        branch = [_he_conv(in_ch, out_ch, stride, True, rng, dtype), Elu(alpha),
                  _he_conv(out_ch, out_ch, 1, True, rng, dtype), Elu(alpha)]
        post = None
    elif variant is V.ELU_CONV_ELU_CONV:
        branch = [Elu(alpha), _he_conv(in_ch, out_ch, stride, True, rng, dtype),
                  Elu(alpha), _he_conv(out_ch, out_ch, 1, True, rng, dtype)]
        post = None
    else:
        branch = [_he_conv(in_ch, out_ch, stride, True, rng, dtype), Elu(alpha),
                  _he_conv(out_ch, out_ch, 1, False, rng, dtype), bn()]
        post = Elu(alpha) if variant is V.CONV_ELU_CONV_BN_ELU_AFTER_ADD else None
    return ResBlock(variant, in_ch, out_ch, stride, branch, post)


def block_forward(block: ResBlock, x, mode="train", update_stats=True):
    ctxs = []
    h = x
    for layer in block.branch:
        h, ctx = layer.forward(h, mode, update_stats)
        ctxs.append(ctx)
    pre = h + shortcut_apply(x, block.in_ch, block.out_ch, block.stride)
    out = pre if block.post is None else block.post.forward(pre, mode, update_stats)[0]
    return out, (x.shape, ctxs, pre)


def block_backward(block: ResBlock, cache, g):
    x_shape, ctxs, pre = cache
    if block.post is not None:
        g, _ = block.post.backward(pre, g)
    grads = []
    gb = g
    for layer, ctx in zip(reversed(block.branch), reversed(ctxs)):
        gb, lg = layer.backward(ctx, gb)
        grads.append(lg)
    grads.reverse()
    gx = gb + shortcut_backward(g, x_shape, block.stride)
    return gx, grads


# ---------------------------------------------------------------- network

@dataclass
class Network:
    config: NetworkConfig
    stem: list
    stages: list[list[ResBlock]]
    head_act: Elu | None
    fc_weights: np.ndarray
    fc_bias: np.ndarray
    _names: list = field(default_factory=list, repr=False)

    @property
    def blocks(self) -> list[ResBlock]:
        return [b for stage in self.stages for b in stage]

    def _layer_slots(self):
        # (prefix, layer) for every layer that may own arrays, in registry order
        yield "stem.conv", self.stem[0]
        yield "stem.bn", self.stem[1]
        for si, stage in enumerate(self.stages, 1):
            for bi, block in enumerate(stage):
                for name, layer in block.named_layers():
                    if name is not None:
                        yield f"stage{si}.block{bi}.{name}", layer

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        """Every learnable tensor exactly once, in a fixed order."""
        out = []
        for prefix, layer in self._layer_slots():
            out.extend((f"{prefix}.{n}", a) for n, a in layer.params())
        out.append(("fc.weights", self.fc_weights))
        out.append(("fc.bias", self.fc_bias))
        return out

    def buffers(self) -> list[tuple[str, np.ndarray]]:
        """BN running statistics, in registry order."""
        out = []
        for prefix, layer in self._layer_slots():
            out.extend((f"{prefix}.{n}", a) for n, a in layer.buffers())
        return out

    def set_buffers(self, values: dict[str, np.ndarray]) -> None:
        for prefix, layer in self._layer_slots():
            for n, _ in layer.buffers():
                key = f"{prefix}.{n}"
                if key in values:
                    layer.set_buffer(n, values[key])

    def weighted_layer_count(self) -> int:
        convs = sum(1 for layer in self.stem if getattr(layer, "weighted", False))
        convs += sum(len(b.convs) for b in self.blocks)
        return convs + 1

    def parameter_count(self) -> int:
        return sum(a.size for _, a in self.parameters())

    def astype(self, dtype) -> "Network":
        net = copy.deepcopy(self)
        for layer in net.stem:
            layer.cast(dtype)
        for block in net.blocks:
            for layer in block.branch:
                layer.cast(dtype)
        net.fc_weights = net.fc_weights.astype(dtype)
        net.fc_bias = net.fc_bias.astype(dtype)
        return net

    @property
    def dtype(self):
        return self.fc_weights.dtype


def build_network(cfg: NetworkConfig, rng: Rng, dtype=np.float32) -> Network:
    w1, w2, w3 = cfg.widths
    stem_act = Elu(cfg.alpha) if cfg.variant.uses_elu else Relu()
    stem = [_he_conv(cfg.in_channels, w1, 1, False, rng, dtype),
            BatchNorm(BatchNormState.fresh(w1, dtype)), stem_act]
    stages = []
    in_ch = w1
    for si, width in enumerate((w1, w2, w3)):
        stage = []
        for bi in range(cfg.n):
            stride = 2 if (si > 0 and bi == 0) else 1
            stage.append(build_block(cfg.variant, in_ch, width, stride, rng, cfg.alpha, dtype))
            in_ch = width
        stages.append(stage)
    fc_w = rng.normal((cfg.classes, w3), 0.0, math.sqrt(2.0 / w3)).astype(dtype)
    fc_b = np.zeros(cfg.classes, dtype)
    head_act = Elu(cfg.alpha) if cfg.head_elu else None
    return Network(cfg, stem, stages, head_act, fc_w, fc_b)


def stem_forward(net: Network, x, mode="infer", update_stats=True):
    ctxs = []
    h = x
    for layer in net.stem:
        h, ctx = layer.forward(h, mode, update_stats)
        ctxs.append(ctx)
    return h, ctxs


def head_forward(net: Network, h):
    pre_act = h
    if net.head_act is not None:
        h = net.head_act.forward(h, "infer", False)[0]
    pooled = global_avg_pool_forward(h)
    logits = fully_connected_forward(pooled, net.fc_weights, net.fc_bias)
    return logits, (pre_act, h.shape, pooled)


def forward(net: Network, x: np.ndarray, mode: str = "infer", update_stats: bool = True,
            check_finite: bool = True):
    """Run the network; returns ``(logits, cache)``.

    Train mode normalizes with batch statistics and, unless ``update_stats`` is
    False, folds them into the BN running statistics. Infer mode is pure.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    if x.ndim != 4 or x.shape[1] != net.config.in_channels:
        raise ShapeError(f"expected (N, {net.config.in_channels}, H, W) input, got {x.shape}")
    h, stem_ctx = stem_forward(net, x, mode, update_stats)
    block_caches = []
    for block in net.blocks:
        h, bc = block_forward(block, h, mode, update_stats)
        block_caches.append(bc)
    logits, head_ctx = head_forward(net, h)
    if check_finite and not np.isfinite(logits).all():
        raise DivergenceError("non-finite activations reached the classifier")
    return logits, {"mode": mode, "stem": stem_ctx, "blocks": block_caches, "head": head_ctx}


def backward(net: Network, cache, grad_logits: np.ndarray) -> dict[str, np.ndarray]:
    """Gradient of the loss for every registry entry, keyed like ``net.parameters()``."""
    if not cache or "blocks" not in cache or len(cache["blocks"]) != len(net.blocks):
        raise ValueError("missing or stale forward cache")
    if cache["mode"] != "train":
        raise ValueError("backward needs a train-mode forward cache")
    pre_act, act_shape, pooled = cache["head"]
    gp, g_fc_w, g_fc_b = fully_connected_backward(pooled, net.fc_weights, grad_logits)
    g = global_avg_pool_backward(act_shape, gp)
    if net.head_act is not None:
        g, _ = net.head_act.backward(pre_act, g)

    per_layer = {}
    for block, bc, prefix in zip(reversed(net.blocks), reversed(cache["blocks"]),
                                 reversed(_block_prefixes(net))):
        g, grads = block_backward(block, bc, g)
        for (name, _), lg in zip(block.named_layers(), grads):
            if name is not None:
                per_layer[f"{prefix}.{name}"] = lg
    for layer, ctx, name in zip(reversed(net.stem), reversed(cache["stem"]),
                                ("stem.act", "stem.bn", "stem.conv")):
        g, lg = layer.backward(ctx, g)
        per_layer[name] = lg

    out = {}
    for prefix, layer in net._layer_slots():
        for n, _ in layer.params():
            out[f"{prefix}.{n}"] = per_layer[prefix][n]
    out["fc.weights"] = g_fc_w
    out["fc.bias"] = g_fc_b
    out["input"] = g
    return out


def _block_prefixes(net: Network) -> list[str]:
    return [f"stage{si}.block{bi}" for si, stage in enumerate(net.stages, 1)
            for bi in range(len(stage))]


def activation_moment_profile(net: Network, x: np.ndarray) -> np.ndarray:
    """Mean squared activation after every block, forward only.

    BN layers normalize with the statistics of ``x`` (as during the first
    training step) and running statistics are left untouched. Non-finite
    moments are returned as-is for the caller to report as divergence.
    """
    moments = []
    with np.errstate(over="ignore", invalid="ignore"):
        h, _ = stem_forward(net, x, "train", update_stats=False)
        for block in net.blocks:
            h, _ = block_forward(block, h, "train", update_stats=False)
            moments.append(float(np.mean(np.square(h, dtype=np.float64))))
    return np.array(moments)


def growth_ratio(moments: np.ndarray) -> float:
    """Last-block over first-block second moment."""
    return float(moments[-1] / moments[0])


def count_parameters(cfg: NetworkConfig) -> int:
    """Closed-form parameter count, independent of ``build_network``."""
    w1, w2, w3 = cfg.widths
    v = cfg.variant
    total = 9 * cfg.in_channels * w1 + 2 * w1  # stem conv + BN
    in_ch = w1
    for width in (w1, w2, w3):
        for _ in range(cfg.n):
            total += 9 * in_ch * width + 9 * width * width
            if v is BlockVariant.BASELINE:
                total += 4 * width
            elif v in (BlockVariant.CONV_ELU_CONV_ELU, BlockVariant.ELU_CONV_ELU_CONV):
                total += 2 * width
            else:
                total += width + 2 * width
            in_ch = width
    return total + w3 * cfg.classes + cfg.classes
