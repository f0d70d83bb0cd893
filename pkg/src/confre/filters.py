"""Residual refinement nets used on both sides of the codec loop.

One architecture serves two roles: the in-loop context filter (feature
space, runs before motion compensation, so its effect compounds over
frames) and the out-of-loop reconstruction enhancer (pixel space, never
fed back).  Layout: a 3x3 embed conv into `width` channels, `depth`
residual blocks (conv, ReLU, conv, skip add; no normalization), a final
3x3 conv back to the output channels, and a global skip from input to
output.

The final conv is zero-initialized, so a freshly built net is an exact
identity: enabling an untrained filter cannot change what the codec
emits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import WeightFormatError
from .weights_io import read_weight_file, write_weight_file

__all__ = [
    "FilterConfig",
    "FilterNet",
    "DeployedFilter",
    "build_filter",
    "expected_parameter_count",
    "parameter_count",
    "filter_forward",
    "filter_forward_tensor",
    "save_weights",
    "load_weights",
]


@dataclass(frozen=True)
class FilterConfig:
    in_channels: int
    out_channels: int
    width: int
    depth: int

    def __post_init__(self):
        if self.in_channels < 1 or self.out_channels < 1 or self.width < 1:
            raise ValueError(f"channel counts must be >= 1: {self}")
        if self.depth < 0:
            raise ValueError(f"depth must be >= 0: {self}")
        if self.in_channels != self.out_channels:
            raise ValueError(
                f"global skip needs in_channels == out_channels, got "
                f"{self.in_channels} vs {self.out_channels}"
            )


def expected_parameter_count(config: FilterConfig) -> int:
    """Closed-form weight count: embed + depth residual blocks + final conv."""
    n, m = config.width, config.depth
    embed = config.in_channels * n * 9 + n
    blocks = m * 2 * (n * n * 9 + n)
    final = n * config.out_channels * 9 + config.out_channels
    return embed + blocks + final


@dataclass
class FilterNet:
    config: FilterConfig
    embed: ad.ConvParams
    blocks: list  # [(ConvParams, ConvParams), ...]
    final: ad.ConvParams

    def parameters(self):
        out = self.embed.tensors()
        for c1, c2 in self.blocks:
            out += c1.tensors() + c2.tensors()
        out += self.final.tensors()
        return out

    def named_arrays(self, prefix=""):
        arrays = {
            f"{prefix}embed.kernel": self.embed.kernel.data,
            f"{prefix}embed.bias": self.embed.bias.data,
            f"{prefix}final.kernel": self.final.kernel.data,
            f"{prefix}final.bias": self.final.bias.data,
        }
        for i, (c1, c2) in enumerate(self.blocks):
            arrays[f"{prefix}block{i:02d}.conv1.kernel"] = c1.kernel.data
            arrays[f"{prefix}block{i:02d}.conv1.bias"] = c1.bias.data
            arrays[f"{prefix}block{i:02d}.conv2.kernel"] = c2.kernel.data
            arrays[f"{prefix}block{i:02d}.conv2.bias"] = c2.bias.data
        return arrays

    def deployed(self):
        return DeployedFilter(
            config=self.config,
            embed=ad.deploy_conv(self.embed),
            blocks=[(ad.deploy_conv(c1), ad.deploy_conv(c2)) for c1, c2 in self.blocks],
            final=ad.deploy_conv(self.final),
        )


@dataclass
class DeployedFilter:
    """Float32 weights for the fixed-order inference pass."""

    config: FilterConfig
    embed: ad.ConvWeights
    blocks: list
    final: ad.ConvWeights


def build_filter(config: FilterConfig, seed: int) -> FilterNet:
    """Seeded He init everywhere except the zero final conv (exact identity)."""
    rng = np.random.default_rng(seed)
    embed = ad.he_conv_params(config.width, config.in_channels, rng, name="embed")
    blocks = []
    for i in range(config.depth):
        blocks.append(
            (
                ad.he_conv_params(config.width, config.width, rng, name=f"block{i:02d}.conv1"),
                ad.he_conv_params(config.width, config.width, rng, name=f"block{i:02d}.conv2"),
            )
        )
    final = ad.zero_conv_params(config.out_channels, config.width, name="final")
    return FilterNet(config=config, embed=embed, blocks=blocks, final=final)


def parameter_count(net: FilterNet) -> int:
    return sum(t.data.size for t in net.parameters())


def _check_input(config, x):
    if x.ndim not in (3, 4):
        raise ValueError(f"filter input must be (c, h, w) or (b, c, h, w), got {x.shape}")
    ch = x.shape[-3]
    if ch != config.in_channels:
        raise ValueError(
            f"filter input has {ch} channels, net expects {config.in_channels} "
            f"(input shape {x.shape})"
        )


def filter_forward(net, x: np.ndarray) -> np.ndarray:
    """Float32 inference pass; accepts (c, h, w) or (b, c, h, w)."""
    dep = net.deployed() if isinstance(net, FilterNet) else net
    _check_input(dep.config, x)
    squeeze = x.ndim == 3
    h = np.ascontiguousarray(x, dtype=np.float32)
    if squeeze:
        h = h[None]
    inp = h
    h = ad.conv3x3_infer(h, dep.embed)
    for c1, c2 in dep.blocks:
        t = ad.conv3x3_infer(h, c1)
        np.maximum(t, 0.0, out=t)
        h = h + ad.conv3x3_infer(t, c2)
    out = inp + ad.conv3x3_infer(h, dep.final)
    return out[0] if squeeze else out


def filter_forward_tensor(net: FilterNet, x: ad.Tensor) -> ad.Tensor:
    """Float64 training-graph pass; input must be 4-D."""
    _check_input(net.config, x.data)
    h = ad.conv2d(x, net.embed)
    for c1, c2 in net.blocks:
        h = ad.add(h, ad.conv2d(ad.relu(ad.conv2d(h, c1)), c2))
    return ad.add(x, ad.conv2d(h, net.final))


def save_weights(net: FilterNet, path):
    write_weight_file(path, net.named_arrays())


def net_from_arrays(arrays: dict, prefix="") -> FilterNet:
    """Rebuilds a FilterNet from named float32 arrays (values lifted to f64)."""

    def take(name, rank):
        key = prefix + name
        if key not in arrays:
            raise WeightFormatError(f"weight file is missing array {key!r}")
        arr = np.asarray(arrays[key], dtype=np.float64)
        if arr.ndim != rank:
            raise WeightFormatError(f"array {key!r} has rank {arr.ndim}, expected {rank}")
        return arr

    embed_k = take("embed.kernel", 4)
    final_k = take("final.kernel", 4)
    width = embed_k.shape[0]
    depth = 0
    while f"{prefix}block{depth:02d}.conv1.kernel" in arrays:
        depth += 1
    config = FilterConfig(
        in_channels=embed_k.shape[1],
        out_channels=final_k.shape[0],
        width=width,
        depth=depth,
    )
    embed = ad.ConvParams(ad.parameter(embed_k), ad.parameter(take("embed.bias", 1)))
    blocks = []
    for i in range(depth):
        blocks.append(
            (
                ad.ConvParams(
                    ad.parameter(take(f"block{i:02d}.conv1.kernel", 4)),
                    ad.parameter(take(f"block{i:02d}.conv1.bias", 1)),
                ),
                ad.ConvParams(
                    ad.parameter(take(f"block{i:02d}.conv2.kernel", 4)),
                    ad.parameter(take(f"block{i:02d}.conv2.bias", 1)),
                ),
            )
        )
    final = ad.ConvParams(ad.parameter(final_k), ad.parameter(take("final.bias", 1)))
    net = FilterNet(config=config, embed=embed, blocks=blocks, final=final)
    for i, (c1, c2) in enumerate(net.blocks):
        for p in (c1, c2):
            if p.kernel.data.shape != (width, width, 3, 3):
                raise WeightFormatError(
                    f"block {i} kernel shape {p.kernel.data.shape} inconsistent "
                    f"with width {width}"
                )
    if final.kernel.data.shape[1] != width:
        raise WeightFormatError(
            f"final kernel shape {final.kernel.data.shape} inconsistent with width {width}"
        )
    return net


def load_weights(path) -> FilterNet:
    return net_from_arrays(read_weight_file(path))
