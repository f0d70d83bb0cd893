"""Multi-stage training on top of the float64 autodiff tape.

Stage 1 trains the codec's conv heads end to end through a T-frame
unroll; stage 2 freezes them and trains the in-loop context filter
through the same unroll (the filter's payoff is cross-frame, so T >= 2);
stage 3 freezes the codec again and fits the out-of-loop enhancer by
plain regression onto reconstructions sampled across frames and rates.

Two pieces of the coding chain are not differentiable and get standard
relaxations, used in the training forward pass only:

* hard quantization -> additive uniform noise in [-step/2, step/2]
  ("train" mode) or rounding with a straight-through gradient ("eval"
  mode, used for deterministic validation losses);
* coded bits -> a closed-form Laplacian bin-mass proxy with a detached
  per-channel maximum-likelihood scale.

Block motion search stays outside the graph: each frame's motion field
is computed on the current reconstruction data and treated as constant,
so gradients flow through the warp gather but not the search.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .codec import (
    CodecConfig,
    CodecNets,
    black_frame,
    build_codec_nets,
    motion_estimate,
    nets_from_arrays,
    rgb_to_luma,
    zero_context,
)
from .dct import block_dct2, block_idct2, quantize
from .data import training_clips
from .decision import DecisionParams, encode_sequence
from .errors import TrainingDivergedError
from .filters import FilterConfig, FilterNet, build_filter, filter_forward_tensor, net_from_arrays
from .weights_io import read_weight_file, write_weight_file

__all__ = [
    "LAMBDA_WEIGHTS",
    "TrainConfig",
    "ClipDataset",
    "LogRow",
    "lambda_schedule",
    "warp_tensor",
    "block_dct_tensor",
    "block_idct_tensor",
    "clamp01_ste",
    "quantize_ste",
    "laplace_rate_bits",
    "codec_step_tensor",
    "unrolled_loss",
    "train_baseline",
    "train_contextual_filter",
    "train_reconstruction_enhancer",
    "write_training_log",
    "desk_preset",
    "run_canonical_training",
    "TrainedBundle",
    "bundle_from_arrays",
    "config_meta",
    "config_from_meta",
    "META_KEY",
]

LN2 = float(np.log(2.0))
LAMBDA_WEIGHTS = (1.4, 0.5, 0.9, 0.5)
SCALE_FLOOR = 1e-3     # Laplace scale clamp; keeps the proxy gradient bounded
MASS_FLOOR = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    """Shared knobs for all three stages.

    `base_lambdas[q]` weights distortion for quality index q (rate enters
    as bits per pixel); `hierarchy` cycles over unroll positions so one
    frame per group of four is held to a higher standard.  `batch_size`
    only matters for the enhancer stage, which regresses on stacked
    frames instead of unrolling.  `warmup_max` > 0 prefixes each unroll
    with up to that many loss-free frames coded plain, so the optimized
    window starts from a realistically aged context instead of always
    bootstrapping at a refresh.
    """

    unroll: int = 4
    steps: int = 400
    lr: float = 1e-3
    batch_size: int = 8
    seed: int = 0
    warmup_max: int = 0
    base_lambdas: tuple[float, ...] = (256.0, 1024.0, 4096.0, 16384.0)
    hierarchy: tuple[float, ...] = LAMBDA_WEIGHTS

    def __post_init__(self):
        if self.unroll < 1:
            raise ValueError(f"unroll must be >= 1, got {self.unroll}")
        if self.warmup_max < 0:
            raise ValueError(f"warmup_max must be >= 0, got {self.warmup_max}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.lr <= 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if len(self.base_lambdas) < 1 or any(l <= 0 for l in self.base_lambdas):
            raise ValueError(f"base_lambdas must be positive: {self.base_lambdas}")
        if len(self.hierarchy) != 4 or any(w <= 0 for w in self.hierarchy):
            raise ValueError(f"hierarchy must be a positive period-4 table: {self.hierarchy}")


def lambda_schedule(t: int, base_lambda: float,
                    weights: tuple[float, ...] = LAMBDA_WEIGHTS) -> float:
    """Distortion weight for unroll position t: base * weights[t mod 4]."""
    if t < 0:
        raise ValueError(f"frame index must be >= 0, got {t}")
    return base_lambda * weights[t % len(weights)]


class ClipDataset:
    """Immutable pile of (frames, 3, h, w) float32 clips sharing dimensions."""

    def __init__(self, clips):
        if len(clips) < 1:
            raise ValueError("dataset needs at least one clip")
        store = []
        for i, clip in enumerate(clips):
            arr = np.ascontiguousarray(clip, dtype=np.float32)
            if arr.ndim != 4 or arr.shape[1] != 3:
                raise ValueError(f"clip {i} must be (frames, 3, h, w), got {arr.shape}")
            if arr.shape[0] < 2:
                raise ValueError(f"clip {i} needs >= 2 frames, got {arr.shape[0]}")
            if store and arr.shape[1:] != store[0].shape[1:]:
                raise ValueError(
                    f"clip {i} dims {arr.shape[1:]} differ from {store[0].shape[1:]}"
                )
            if not np.isfinite(arr).all() or arr.min() < 0.0 or arr.max() > 1.0:
                raise ValueError(f"clip {i} has values outside [0, 1]")
            store.append(arr)
        self.clips = tuple(store)

    def __len__(self):
        return len(self.clips)

    def __getitem__(self, i):
        return self.clips[i]

    @property
    def frame_shape(self):
        return self.clips[0].shape[1:]

    def sample(self, rng) -> np.ndarray:
        return self.clips[int(rng.integers(len(self.clips)))]

    @classmethod
    def synthetic(cls, count: int, frames: int, height: int, width: int) -> "ClipDataset":
        return cls(training_clips(count, frames, height, width))


# ---------------------------------------------------------------------------
# graph nodes the conv tape does not provide

def warp_tensor(x: ad.Tensor, motion: np.ndarray, block: int) -> ad.Tensor:
    """Differentiable twin of `codec.warp_frame` for (b, c, h, w) tensors.

    The motion field is a constant; the gather backpropagates by
    scatter-adding into the reference positions it read from.
    """
    if x.data.ndim != 4:
        raise ValueError(f"warp_tensor expects 4-D input, got shape {x.data.shape}")
    b, c, h, w = x.data.shape
    dy = np.repeat(np.repeat(motion[0], block, axis=0), block, axis=1)
    dx = np.repeat(np.repeat(motion[1], block, axis=0), block, axis=1)
    ys = np.clip(np.arange(h)[:, None] + dy, 0, h - 1)
    xs = np.clip(np.arange(w)[None, :] + dx, 0, w - 1)
    out = x.data[:, :, ys, xs]

    def backprop(grad):
        dref = np.zeros_like(x.data)
        bi = np.arange(b)[:, None, None, None]
        ci = np.arange(c)[None, :, None, None]
        np.add.at(dref, (bi, ci, ys[None, None], xs[None, None]), grad)
        x.accumulate(dref)

    return ad.Tensor(out, parents=(x,), backprop=backprop)


def _map_blocks(fn, data):
    b, c, h, w = data.shape
    return fn(data.reshape(b * c, h, w)).reshape(b, c, h, w)


def block_dct_tensor(x: ad.Tensor) -> ad.Tensor:
    """8x8 block DCT per channel; orthonormal, so the adjoint is the inverse."""
    out = _map_blocks(block_dct2, x.data)

    def backprop(grad):
        x.accumulate(_map_blocks(block_idct2, grad))

    return ad.Tensor(out, parents=(x,), backprop=backprop)


def block_idct_tensor(x: ad.Tensor) -> ad.Tensor:
    out = _map_blocks(block_idct2, x.data)

    def backprop(grad):
        x.accumulate(_map_blocks(block_dct2, grad))

    return ad.Tensor(out, parents=(x,), backprop=backprop)


def clamp01_ste(x: ad.Tensor) -> ad.Tensor:
    """Clip to [0, 1] with a straight-through gradient (clamp ignored)."""

    def backprop(grad):
        x.accumulate(grad)

    return ad.Tensor(np.clip(x.data, 0.0, 1.0), parents=(x,), backprop=backprop)


def quantize_ste(coef: ad.Tensor, step: float) -> ad.Tensor:
    """Hard quantize-dequantize with a straight-through gradient."""
    out = quantize(coef.data, step).astype(np.float64) * step

    def backprop(grad):
        coef.accumulate(grad)

    return ad.Tensor(out, parents=(coef,), backprop=backprop)


def laplace_rate_bits(y: ad.Tensor, scale=None) -> ad.Tensor:
    """Total coding-cost proxy, in bits, for coefficients in unit-width bins.

    Models each value as Laplacian and charges -log2 of the probability
    mass of its quantization bin [y - 1/2, y + 1/2].  Tail bins are
    evaluated in log space, so far outliers keep a linear cost and a
    live gradient; only the bin straddling zero needs (and gets) the
    MASS_FLOOR clamp.  With `scale=None` the per-(batch, channel) scale
    is the detached maximum-likelihood estimate mean(|y|), floored at
    SCALE_FLOOR; the gradient treats the scale as a constant either way,
    so finite-difference checks must pin it via the `scale` argument.
    """
    data = y.data
    if data.ndim != 4:
        raise ValueError(f"laplace_rate_bits expects 4-D input, got shape {data.shape}")
    if scale is None:
        b = np.mean(np.abs(data), axis=(2, 3), keepdims=True)
    else:
        b = np.asarray(scale, dtype=np.float64)
    b = np.maximum(b, SCALE_FLOOR)

    ay = np.abs(data)
    # tail bins: -ln P = |y|/b - ln sinh(1/(2b)), stable for tiny b
    t = 0.5 / b
    ln_sinh = t + np.log1p(-np.exp(-2.0 * t)) - LN2
    outer = ay / b - ln_sinh
    # the straddling bin around zero; clip keeps the exps bounded where unused
    yc = np.clip(data, -0.5, 0.5)
    ea = np.exp(-(yc + 0.5) / b)
    eb = np.exp(-(0.5 - yc) / b)
    mass = np.maximum(1.0 - 0.5 * (ea + eb), MASS_FLOOR)
    neglog = np.where(ay >= 0.5, outer, -np.log(mass))
    total = np.asarray(neglog.sum() / LN2)

    def backprop(grad):
        d_inner = np.where(mass > MASS_FLOOR, -(ea - eb) / (2.0 * b * mass), 0.0)
        d_neglog = np.where(ay >= 0.5, np.sign(data) / b, d_inner)
        y.accumulate(grad * d_neglog / LN2)

    return ad.Tensor(total, parents=(y,), backprop=backprop)


# ---------------------------------------------------------------------------
# the differentiable codec step and unrolled objective

def codec_step_tensor(nets: CodecNets, x: ad.Tensor, prev: ad.Tensor,
                      ctx: ad.Tensor, motion: np.ndarray, step: float,
                      noise: np.ndarray | None, rate_scale=None):
    """One coding step on the tape; mirrors the float32 frame pipeline.

    `noise` carries the pre-drawn uniform dither (training mode); None
    switches to straight-through hard quantization (eval mode).
    `rate_scale` pins the proxy's Laplace scale, which finite-difference
    tests need because the default MLE scale is detached.  Returns
    (recon, new_ctx, rate_bits, dist) tensors.
    """
    block = nets.config.block
    aligned_prev = warp_tensor(prev, motion, block)
    aligned_ctx = warp_tensor(ctx, motion, block)
    feat = ad.conv2d(aligned_prev, nets.embed_prev)
    z = ad.relu(ad.conv2d(ad.concat_channels(feat, aligned_ctx), nets.fuse1))
    fused = ad.conv2d(z, nets.fuse2)
    pred = ad.conv2d(fused, nets.predict)

    coef = block_dct_tensor(ad.sub(x, pred))
    if noise is not None:
        coef_q = ad.add_const(coef, noise)
    else:
        coef_q = quantize_ste(coef, step)
    rate_bits = laplace_rate_bits(ad.mul_const(coef_q, 1.0 / step), scale=rate_scale)
    resid_hat = block_idct_tensor(coef_q)

    emb = ad.conv2d(resid_hat, nets.embed_resid)
    zc = ad.relu(ad.conv2d(ad.concat_channels(fused, emb), nets.ctx1))
    new_ctx = ad.tanh(ad.conv2d(zc, nets.ctx2))
    correction = ad.conv2d(new_ctx, nets.readout)
    recon = clamp01_ste(ad.add(ad.add(pred, resid_hat), correction))
    dist = ad.mse(x, recon)
    return recon, new_ctx, rate_bits, dist


def unrolled_loss(nets: CodecNets, window: np.ndarray, quality: int,
                  config: TrainConfig, rng, cf: FilterNet | None = None,
                  mode: str = "train", warmup: int = 0):
    """(1/T) sum of (bpp + lambda_t * mse) over a window coded from black.

    The first `warmup` frames of the window are coded plain in eval mode
    with the chain state detached and contribute nothing to the loss;
    they exist to age the context before the optimized frames begin.
    The context filter, when given, refines the carried context at every
    optimized frame except a cold start's first one, where the deployed
    loop never consults the filter (the context is freshly zeroed).
    Returns (loss tensor, mean bpp, mean mse) over the optimized frames.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    codec_cfg = nets.config
    tframes, _, h, w = window.shape
    if not 0 <= warmup <= tframes - 1:
        raise ValueError(f"warmup {warmup} leaves no optimized frames of {tframes}")
    step = codec_cfg.quality_steps[quality]
    base_lambda = config.base_lambdas[quality]
    prev = ad.constant(black_frame(h, w)[None])
    ctx = ad.constant(zero_context(codec_cfg, h, w)[None])

    total = None
    rate_sum = 0.0
    dist_sum = 0.0
    n_loss = tframes - warmup
    for t in range(tframes):
        x = ad.constant(np.asarray(window[t], dtype=np.float64)[None])
        if cf is not None and t >= warmup and t > 0:
            ctx = filter_forward_tensor(cf, ctx)
        motion = motion_estimate(rgb_to_luma(window[t]),
                                 rgb_to_luma(prev.data[0]), codec_cfg)
        noise = None
        if mode == "train" and t >= warmup:
            noise = rng.uniform(-0.5, 0.5, (1, 3, h, w)) * step
        recon, ctx, rate_bits, dist = codec_step_tensor(
            nets, x, prev, ctx, motion, step, noise)
        if t < warmup:
            prev = ad.constant(recon.data)
            ctx = ad.constant(ctx.data)
            continue
        bpp = ad.mul_const(rate_bits, 1.0 / (h * w))
        term = ad.add(bpp, ad.mul_const(dist, lambda_schedule(
            t - warmup, base_lambda, config.hierarchy)))
        total = term if total is None else ad.add(total, term)
        rate_sum += float(bpp.data)
        dist_sum += float(dist.data)
        prev = recon
    loss = ad.mul_const(total, 1.0 / n_loss)
    return loss, rate_sum / n_loss, dist_sum / n_loss


# ---------------------------------------------------------------------------
# stages

@dataclass(frozen=True)
class LogRow:
    step: int
    loss: float
    rate_proxy: float
    distortion: float


def write_training_log(path, rows) -> None:
    with open(path, "w") as fh:
        fh.write("step,loss,rate_proxy,distortion\n")
        for r in rows:
            fh.write(f"{r.step},{r.loss!r},{r.rate_proxy!r},{r.distortion!r}\n")


def _check_divergence(loss_value: float, step_index: int) -> None:
    if not np.isfinite(loss_value):
        raise TrainingDivergedError(f"loss became non-finite at step {step_index}")


def _sample_window(dataset: ClipDataset, unroll: int, rng,
                   warmup_max: int = 0) -> tuple[np.ndarray, int]:
    """Random window of warmup + unroll frames; returns (window, warmup).

    The warmup draw happens only when `warmup_max` > 0, so configs
    without warmup consume the exact same rng stream as before the knob
    existed.
    """
    clip = dataset.sample(rng)
    if clip.shape[0] < unroll:
        raise ValueError(
            f"clip length {clip.shape[0]} shorter than unroll {unroll}"
        )
    warmup = 0
    if warmup_max > 0:
        warmup = int(rng.integers(0, min(warmup_max, clip.shape[0] - unroll) + 1))
    span = warmup + unroll
    start = int(rng.integers(0, clip.shape[0] - span + 1))
    return clip[start:start + span], warmup


def train_baseline(dataset: ClipDataset, config: TrainConfig,
                   codec_config: CodecConfig,
                   progress=None) -> tuple[CodecNets, list[LogRow]]:
    """Stage 1: all eight codec heads, variable rate, windowed unrolls."""
    rng = np.random.default_rng(config.seed)
    nets = build_codec_nets(codec_config, seed=config.seed)
    params = nets.parameters()
    opt = ad.adam_init(params)
    rows = []
    n_quality = len(codec_config.quality_steps)
    for i in range(config.steps):
        window, warmup = _sample_window(dataset, config.unroll, rng,
                                        config.warmup_max)
        quality = int(rng.integers(n_quality))
        loss, rate, dist = unrolled_loss(nets, window, quality, config, rng,
                                         warmup=warmup)
        _check_divergence(float(loss.data), i)
        grads = ad.backward(loss)
        ad.adam_step(params, grads, config.lr, opt)
        rows.append(LogRow(i, float(loss.data), rate, dist))
        if progress is not None:
            progress(rows[-1])
    return nets, rows


def train_contextual_filter(nets: CodecNets, dataset: ClipDataset,
                            config: TrainConfig,
                            filter_config: FilterConfig | None = None,
                            progress=None) -> tuple[FilterNet, list[LogRow]]:
    """Stage 2: the in-loop filter, codec frozen, same unrolled objective."""
    if config.unroll < 2:
        raise ValueError(
            f"context filtering pays off across frames; unroll must be >= 2, "
            f"got {config.unroll}"
        )
    c = nets.config.context_channels
    if filter_config is None:
        filter_config = FilterConfig(c, c, 32, 2)
    if filter_config.in_channels != c:
        raise ValueError(
            f"filter channels {filter_config.in_channels} do not match the "
            f"codec's {c} context channels"
        )
    rng = np.random.default_rng(config.seed)
    cf = build_filter(filter_config, seed=config.seed)
    params = cf.parameters()
    opt = ad.adam_init(params)
    rows = []
    n_quality = len(nets.config.quality_steps)
    for i in range(config.steps):
        window, warmup = _sample_window(dataset, config.unroll, rng,
                                        config.warmup_max)
        quality = int(rng.integers(n_quality))
        loss, rate, dist = unrolled_loss(nets, window, quality, config, rng,
                                         cf=cf, warmup=warmup)
        _check_divergence(float(loss.data), i)
        grads = ad.backward(loss)
        ad.adam_step(params, grads, config.lr, opt)
        rows.append(LogRow(i, float(loss.data), rate, dist))
        if progress is not None:
            progress(rows[-1])
    return cf, rows


def _plain_rollouts(nets: CodecNets, dataset: ClipDataset) -> list[list[np.ndarray]]:
    """Frozen-codec reconstructions per clip per quality (refresh at t=0 only)."""
    deployed = nets.deployed()
    out = []
    for clip in dataset.clips:
        per_quality = []
        for q in range(len(nets.config.quality_steps)):
            params = DecisionParams(refresh_period=None, total_frames=clip.shape[0])
            res = encode_sequence(clip, deployed, q, params)
            per_quality.append(np.stack(res.recons))
        out.append(per_quality)
    return out


def train_reconstruction_enhancer(nets: CodecNets, dataset: ClipDataset,
                                  config: TrainConfig,
                                  filter_config: FilterConfig | None = None,
                                  progress=None) -> tuple[FilterNet, list[LogRow]]:
    """Stage 3: the display-side enhancer, pure MSE on sampled (frame, rate)."""
    if filter_config is None:
        filter_config = FilterConfig(3, 3, 32, 2)
    rng = np.random.default_rng(config.seed)
    rollouts = _plain_rollouts(nets, dataset)
    re = build_filter(filter_config, seed=config.seed)
    params = re.parameters()
    opt = ad.adam_init(params)
    rows = []
    n_quality = len(nets.config.quality_steps)
    for i in range(config.steps):
        xs = []
        rs = []
        for _ in range(config.batch_size):
            ci = int(rng.integers(len(dataset)))
            q = int(rng.integers(n_quality))
            t = int(rng.integers(1, dataset[ci].shape[0]))
            xs.append(np.asarray(dataset[ci][t], dtype=np.float64))
            rs.append(np.asarray(rollouts[ci][q][t], dtype=np.float64))
        target = ad.constant(np.stack(xs))
        recon = ad.constant(np.stack(rs))
        out = clamp01_ste(filter_forward_tensor(re, recon))
        loss = ad.mse(target, out)
        _check_divergence(float(loss.data), i)
        grads = ad.backward(loss)
        ad.adam_step(params, grads, config.lr, opt)
        rows.append(LogRow(i, float(loss.data), 0.0, float(loss.data)))
        if progress is not None:
            progress(rows[-1])
    return re, rows


# ---------------------------------------------------------------------------
# the canonical desk-scale run (cached; drives the ablation gates)

RECIPE_VERSION = 1

# one rank-1 float32 array makes a weight bundle self-describing:
# [meta version, context channels, search range]; block size and the
# quality ladder are fixed by CodecConfig defaults
META_KEY = "meta.codec"
META_VERSION = 1


def config_meta(config: CodecConfig) -> np.ndarray:
    return np.array(
        [META_VERSION, config.context_channels, config.search_range],
        dtype=np.float32,
    )


def config_from_meta(arrays: dict) -> CodecConfig:
    from .errors import WeightFormatError

    if META_KEY not in arrays:
        raise WeightFormatError(
            f"weight bundle has no {META_KEY!r} array; cannot recover the "
            f"codec configuration"
        )
    meta = np.asarray(arrays[META_KEY]).ravel()
    if meta.size != 3 or int(meta[0]) != META_VERSION:
        raise WeightFormatError(f"unsupported {META_KEY!r} layout: {meta!r}")
    return CodecConfig(context_channels=int(meta[1]), search_range=int(meta[2]))


def desk_preset() -> tuple[CodecConfig, TrainConfig, TrainConfig, TrainConfig]:
    """Codec config plus per-stage train configs for the canonical run.

    The filter stage unrolls behind a random warmup prefix so it trains
    on contexts aged up to a full clip, which is what it meets when the
    refresh period is long or disabled.
    """
    codec = CodecConfig()
    baseline = TrainConfig(unroll=4, steps=700, lr=1.5e-3, seed=11)
    cf = TrainConfig(unroll=6, steps=600, lr=1e-3, seed=12, warmup_max=18)
    re = TrainConfig(unroll=4, steps=700, lr=1e-3, batch_size=8, seed=13)
    return codec, baseline, cf, re


def desk_dataset() -> ClipDataset:
    return ClipDataset.synthetic(count=12, frames=24, height=32, width=32)


@dataclass
class TrainedBundle:
    codec_config: CodecConfig
    nets: CodecNets
    cf: FilterNet
    re: FilterNet

    def arrays(self) -> dict[str, np.ndarray]:
        out = {META_KEY: config_meta(self.codec_config)}
        out.update(self.nets.named_arrays(prefix="codec."))
        out.update(self.cf.named_arrays(prefix="cf."))
        out.update(self.re.named_arrays(prefix="re."))
        return out


def bundle_from_arrays(arrays: dict,
                       codec_config: CodecConfig | None = None) -> TrainedBundle:
    if codec_config is None:
        codec_config = config_from_meta(arrays)
    return TrainedBundle(
        codec_config=codec_config,
        nets=nets_from_arrays(arrays, codec_config, prefix="codec."),
        cf=net_from_arrays(arrays, prefix="cf."),
        re=net_from_arrays(arrays, prefix="re."),
    )


def _recipe_key() -> str:
    codec, base, cf, re = desk_preset()
    text = repr((RECIPE_VERSION, codec, base, cf, re, "clips:12x24x32x32"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def run_canonical_training(cache_dir, progress=None) -> TrainedBundle:
    """Train (or reload) the desk-scale bundle; cached by recipe hash."""
    from pathlib import Path

    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    codec_config, base_cfg, cf_cfg, re_cfg = desk_preset()
    path = cache_dir / f"desk_{_recipe_key()}.cfwt"
    if path.exists():
        arrays = read_weight_file(path)
        bundle = bundle_from_arrays(arrays, codec_config)
        if META_KEY not in arrays:  # refresh caches written before meta existed
            write_weight_file(path, bundle.arrays())
        return bundle

    dataset = desk_dataset()
    nets, _ = train_baseline(dataset, base_cfg, codec_config, progress=progress)
    cf, _ = train_contextual_filter(nets, dataset, cf_cfg, progress=progress)
    re, _ = train_reconstruction_enhancer(nets, dataset, re_cfg, progress=progress)
    bundle = TrainedBundle(codec_config=codec_config, nets=nets, cf=cf, re=re)
    write_weight_file(path, bundle.arrays())
    return bundle
