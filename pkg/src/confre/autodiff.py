"""Reverse-mode autodiff over (batch, channel, height, width) arrays.

A small eager tape sized for the conv nets used in this package: 3x3
convolutions with stride 1 or 2, ReLU, channel concat, and MSE.  Training
math runs in float64 so analytic gradients can be validated against
central finite differences; the codec deploys weights as float32 for
inference (see `confre.codec`).

Custom graph nodes can be grafted on by constructing `Tensor` directly
with a `backprop` closure; the trainer does this for block transforms,
motion-compensated gathers, and the rate proxy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Tensor",
    "ConvParams",
    "ConvWeights",
    "AdamState",
    "conv2d",
    "conv3x3_raw",
    "conv3x3_infer",
    "deploy_conv",
    "relu",
    "tanh",
    "add",
    "sub",
    "concat_channels",
    "mul_const",
    "add_const",
    "mse",
    "backward",
    "adam_init",
    "adam_step",
    "he_conv_params",
    "zero_conv_params",
]


class Tensor:
    """Node in the computation graph: a float64 ndarray plus grad plumbing.

    `backprop`, when set, is called exactly once during `backward` with the
    node's fully accumulated output gradient and is responsible for routing
    contributions into each parent via `accumulate`.
    """

    __slots__ = ("data", "grad", "parents", "backprop", "trainable", "name")

    def __init__(self, data, parents=(), backprop=None, trainable=False, name=""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.parents = tuple(parents)
        self.backprop = backprop
        self.trainable = trainable
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self):
        tag = " trainable" if self.trainable else ""
        label = f" {self.name!r}" if self.name else ""
        return f"<Tensor{label} shape={self.data.shape}{tag}>"


def parameter(data, name=""):
    """Trainable leaf tensor."""
    return Tensor(np.array(data, dtype=np.float64), trainable=True, name=name)


def constant(data, name=""):
    """Non-trainable leaf tensor (inputs, targets, frozen weights)."""
    return Tensor(data, name=name)


@dataclass
class ConvParams:
    """Weights of one 3x3 conv layer: kernel (out, in, 3, 3), bias (out,)."""

    kernel: Tensor
    bias: Tensor
    stride: int = 1

    def __post_init__(self):
        k = self.kernel.data
        if k.ndim != 4 or k.shape[2:] != (3, 3):
            raise ValueError(f"conv kernel must have shape (out, in, 3, 3), got {k.shape}")
        if self.bias.data.shape != (k.shape[0],):
            raise ValueError(
                f"conv bias shape {self.bias.data.shape} does not match kernel "
                f"out_channels {k.shape[0]}"
            )
        if self.stride not in (1, 2):
            raise ValueError(f"conv stride must be 1 or 2, got {self.stride}")

    @property
    def out_channels(self):
        return self.kernel.data.shape[0]

    @property
    def in_channels(self):
        return self.kernel.data.shape[1]

    def tensors(self):
        return [self.kernel, self.bias]


def he_conv_params(out_ch, in_ch, rng, stride=1, gain=1.0, name=""):
    """He-style normal init: std = gain * sqrt(2 / fan_in)."""
    std = gain * np.sqrt(2.0 / (in_ch * 9))
    kernel = parameter(rng.standard_normal((out_ch, in_ch, 3, 3)) * std, name=f"{name}.kernel")
    bias = parameter(np.zeros(out_ch), name=f"{name}.bias")
    return ConvParams(kernel, bias, stride)


def zero_conv_params(out_ch, in_ch, stride=1, name=""):
    kernel = parameter(np.zeros((out_ch, in_ch, 3, 3)), name=f"{name}.kernel")
    bias = parameter(np.zeros(out_ch), name=f"{name}.bias")
    return ConvParams(kernel, bias, stride)


# ---------------------------------------------------------------------------
# raw numeric kernel, shared by the autodiff op and the float32 codec path

def _im2col(xp, stride):
    b, c, hp, wp = xp.shape
    ho = (hp - 3) // stride + 1
    wo = (wp - 3) // stride + 1
    s0, s1, s2, s3 = xp.strides
    win = np.lib.stride_tricks.as_strided(
        xp,
        (b, ho, wo, c, 3, 3),
        (s0, s2 * stride, s3 * stride, s1, s2, s3),
        writeable=False,
    )
    return win.reshape(b * ho * wo, c * 9), ho, wo


def conv3x3_raw(x, kernel, bias, stride=1):
    """Plain-ndarray forward: zero padding 1, output (b, out, ceil(h/s), ceil(w/s)).

    dtype follows the inputs; the float32 inference path and the float64
    training path share this exact evaluation order.
    """
    b, c, h, w = x.shape
    o = kernel.shape[0]
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    flat, ho, wo = _im2col(xp, stride)
    out = flat @ kernel.reshape(o, c * 9).T
    out += bias
    return out.reshape(b, ho, wo, o).transpose(0, 3, 1, 2)


def _col2im(dflat, xp_shape, stride):
    b, c, hp, wp = xp_shape
    ho = (hp - 3) // stride + 1
    wo = (wp - 3) // stride + 1
    dcols = dflat.reshape(b, ho, wo, c, 3, 3)
    dxp = np.zeros(xp_shape, dtype=dflat.dtype)
    for ki in range(3):
        for kj in range(3):
            rows = slice(ki, ki + stride * (ho - 1) + 1, stride)
            cols = slice(kj, kj + stride * (wo - 1) + 1, stride)
            dxp[:, :, rows, cols] += dcols[:, :, :, :, ki, kj].transpose(0, 3, 1, 2)
    return dxp


class ConvWeights:
    """Inference twin of ConvParams: plain float32 arrays, fixed eval order."""

    __slots__ = ("kernel", "bias", "stride")

    def __init__(self, kernel, bias, stride=1):
        self.kernel = np.ascontiguousarray(kernel, dtype=np.float32)
        self.bias = np.ascontiguousarray(bias, dtype=np.float32)
        self.stride = stride


def deploy_conv(params: ConvParams) -> ConvWeights:
    return ConvWeights(params.kernel.data, params.bias.data, params.stride)


def conv3x3_infer(x, w: ConvWeights):
    return conv3x3_raw(x, w.kernel, w.bias, w.stride)


def conv2d(x: Tensor, params: ConvParams) -> Tensor:
    """Differentiable 3x3 conv, zero padding 1, stride from `params`."""
    kernel, bias, stride = params.kernel, params.bias, params.stride
    if x.data.ndim != 4:
        raise ValueError(f"conv2d input must be 4-D (b, c, h, w), got shape {x.data.shape}")
    b, c, h, w = x.data.shape
    o = params.out_channels
    if c != params.in_channels:
        raise ValueError(
            f"conv2d channel mismatch: input shape {x.data.shape} has {c} channels "
            f"but kernel shape {kernel.data.shape} expects {params.in_channels}"
        )

    xp = np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1)))
    flat, ho, wo = _im2col(xp, stride)
    wmat = kernel.data.reshape(o, c * 9)
    outmat = flat @ wmat.T
    outmat += bias.data
    out_data = outmat.reshape(b, ho, wo, o).transpose(0, 3, 1, 2)

    def backprop(grad):
        g = grad.transpose(0, 2, 3, 1).reshape(b * ho * wo, o)
        bias.accumulate(g.sum(axis=0))
        kernel.accumulate((g.T @ flat).reshape(o, c, 3, 3))
        dxp = _col2im(g @ wmat, xp.shape, stride)
        x.accumulate(dxp[:, :, 1 : 1 + h, 1 : 1 + w])

    return Tensor(out_data, parents=(x, kernel, bias), backprop=backprop)


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0.0)

    def backprop(grad):
        x.accumulate(grad * (x.data > 0.0))

    return Tensor(out, parents=(x,), backprop=backprop)


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)

    def backprop(grad):
        x.accumulate(grad * (1.0 - out * out))

    return Tensor(out, parents=(x,), backprop=backprop)


def _require_same_shape(a, b, op):
    if a.data.shape != b.data.shape:
        raise ValueError(f"{op}: shape mismatch {a.data.shape} vs {b.data.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "add")

    def backprop(grad):
        a.accumulate(grad)
        b.accumulate(grad)

    return Tensor(a.data + b.data, parents=(a, b), backprop=backprop)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "sub")

    def backprop(grad):
        a.accumulate(grad)
        b.accumulate(-grad)

    return Tensor(a.data - b.data, parents=(a, b), backprop=backprop)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 4 or b.data.ndim != 4:
        raise ValueError("concat_channels expects 4-D tensors")
    if a.data.shape[0] != b.data.shape[0] or a.data.shape[2:] != b.data.shape[2:]:
        raise ValueError(
            f"concat_channels: incompatible shapes {a.data.shape} vs {b.data.shape}"
        )
    ca = a.data.shape[1]

    def backprop(grad):
        a.accumulate(grad[:, :ca])
        b.accumulate(grad[:, ca:])

    return Tensor(np.concatenate([a.data, b.data], axis=1), parents=(a, b), backprop=backprop)


def mul_const(x: Tensor, c: float) -> Tensor:
    c = float(c)

    def backprop(grad):
        x.accumulate(grad * c)

    return Tensor(x.data * c, parents=(x,), backprop=backprop)


def add_const(x: Tensor, const) -> Tensor:
    """Adds a non-differentiable constant (noise draws, fixed offsets)."""
    const = np.asarray(const, dtype=np.float64)
    if const.shape != () and const.shape != x.data.shape:
        raise ValueError(f"add_const: constant shape {const.shape} vs tensor {x.data.shape}")

    def backprop(grad):
        x.accumulate(grad)

    return Tensor(x.data + const, parents=(x,), backprop=backprop)


def mse(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "mse")
    diff = a.data - b.data
    n = diff.size
    out = np.asarray((diff * diff).sum() / n)

    def backprop(grad):
        g = grad * (2.0 / n) * diff
        a.accumulate(g)
        b.accumulate(-g)

    return Tensor(out, parents=(a, b), backprop=backprop)


def backward(loss: Tensor):
    """Runs reverse-mode accumulation from a scalar loss.

    Returns a GradientSet: dict mapping every trainable tensor reachable
    from `loss` to its gradient array (same shape as the parameter).
    Gradients of every reachable node are cleared first, so repeated
    calls over long-lived parameters never accumulate across steps.
    """
    if loss.data.shape != ():
        raise ValueError(f"backward requires a scalar loss, got shape {loss.data.shape}")

    topo = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))

    for node in topo:
        node.grad = None
    loss.grad = np.ones((), dtype=np.float64)
    for node in reversed(topo):
        if node.backprop is not None and node.grad is not None:
            node.backprop(node.grad)

    return {
        n: (n.grad if n.grad is not None else np.zeros_like(n.data))
        for n in topo
        if n.trainable
    }


# ---------------------------------------------------------------------------
# optimizer

@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_init(params, beta1=0.9, beta2=0.999, eps=1e-8):
    """Zero first/second moments for every parameter."""
    state = AdamState(beta1=beta1, beta2=beta2, eps=eps)
    for p in params:
        state.m[p] = np.zeros_like(p.data)
        state.v[p] = np.zeros_like(p.data)
    return state


def adam_step(params, grads, lr, state):
    """One Adam update, in place on `param.data`; returns (params, state)."""
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for p in params:
        if p not in grads:
            raise ValueError(f"adam_step: no gradient supplied for parameter {p!r}")
        g = grads[p]
        if g.shape != p.data.shape:
            raise ValueError(
                f"adam_step: gradient shape {g.shape} does not match parameter "
                f"shape {p.data.shape} for {p!r}"
            )
        if p not in state.m:
            raise ValueError(f"adam_step: state missing moments for {p!r}")
        m = state.m[p]
        v = state.v[p]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state
