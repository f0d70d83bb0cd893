"""Conditional inter-frame codec core.

Per frame the pipeline is:

1. block motion search on luma against the previous reconstruction,
   coded losslessly;
2. motion-compensated alignment of the previous reconstruction and of
   the carried feature context;
3. a small conv net fuses the aligned frame with the aligned context
   into a prediction of the current frame;
4. the prediction residual goes through an 8x8 block transform, scalar
   quantization, zero-run tokenization, and adaptive range coding;
5. reconstruction adds back the decoded residual plus a learned
   correction read out of the updated context, then clamps to [0, 1];
6. the updated context (tanh-bounded so recurrence cannot blow up) is
   carried to the next frame.

The encoder reconstructs through the same code path as the decoder, so
encode/decode agree bit for bit.  Net inference runs in float32; the
transform and quantizer stay float64.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .autodiff import (
    ConvParams,
    ConvWeights,
    conv3x3_infer,
    deploy_conv,
    he_conv_params,
    parameter,
)
from .dct import (
    block_dct2,
    block_idct2,
    dequantize,
    quantize,
    unzigzag_blocks,
    zigzag_blocks,
)
from .errors import BitstreamCorruptError
from .rangecoder import AdaptiveModel, RangeDecoder, RangeEncoder

LUMA_WEIGHTS = (0.299, 0.587, 0.114)

# residual token alphabet: end-of-block, zero runs, signed levels, escape
EOB = 0
RUN_MAX = 64          # tokens 1..64 carry the run length directly
LEVEL_BASE = 65       # +1 -> 65, -1 -> 66, +2 -> 67, ... +-255 -> 573/574
LEVEL_MAX = 255
ESC = 575             # followed by 4 raw little-endian int32 bytes
TOKEN_ALPHABET = 576


@dataclass(frozen=True)
class CodecConfig:
    """Structural knobs plus the fixed quality ladder.

    `quality_steps[q]` is the quantizer step for quality index q and
    `quality_lambdas[q]` the matching rate weight used in training; finer
    steps pair with larger weights.
    """

    block: int = 8
    search_range: int = 8
    context_channels: int = 16
    quality_steps: tuple[float, ...] = (32 / 255, 16 / 255, 8 / 255, 4 / 255)
    quality_lambdas: tuple[float, ...] = (256.0, 1024.0, 4096.0, 16384.0)

    def __post_init__(self):
        if self.block != 8:
            raise ValueError(f"block size is fixed at 8, got {self.block}")
        if not 1 <= self.search_range <= 127:
            raise ValueError(f"search_range must be in [1, 127], got {self.search_range}")
        if self.context_channels < 1:
            raise ValueError(f"context_channels must be >= 1, got {self.context_channels}")
        if len(self.quality_steps) != len(self.quality_lambdas):
            raise ValueError("quality_steps and quality_lambdas must have equal length")
        if len(self.quality_steps) < 1:
            raise ValueError("quality ladder must not be empty")
        if any(s <= 0 for s in self.quality_steps):
            raise ValueError("quantizer steps must be positive")
        if any(l <= 0 for l in self.quality_lambdas):
            raise ValueError("rate weights must be positive")

    @property
    def motion_alphabet(self) -> int:
        return 2 * self.search_range + 1

    def check_frame(self, frame: np.ndarray) -> None:
        if frame.ndim != 3 or frame.shape[0] != 3:
            raise ValueError(f"expected (3, h, w) frame, got shape {frame.shape}")
        if frame.shape[1] % self.block or frame.shape[2] % self.block:
            raise ValueError(
                f"frame dims must be multiples of {self.block}, got "
                f"{frame.shape[1]}x{frame.shape[2]}; pad first"
            )


def rgb_to_luma(frame: np.ndarray) -> np.ndarray:
    """(3, h, w) -> (h, w) float64 luma."""
    r, g, b = LUMA_WEIGHTS
    f = np.asarray(frame, dtype=np.float64)
    return r * f[0] + g * f[1] + b * f[2]


def _displacements(search_range: int) -> list[tuple[int, int]]:
    # ordered so that np.argmin's first-hit rule implements the tie-break:
    # smallest |dy|+|dx|, then dy, then dx
    disps = [
        (dy, dx)
        for dy in range(-search_range, search_range + 1)
        for dx in range(-search_range, search_range + 1)
    ]
    disps.sort(key=lambda d: (abs(d[0]) + abs(d[1]), d[0], d[1]))
    return disps


def motion_estimate(cur_luma: np.ndarray, ref_luma: np.ndarray,
                    config: CodecConfig) -> np.ndarray:
    """Exhaustive per-block SAD search; returns (2, nby, nbx) int32 (dy, dx).

    A block's displacement d means its prediction samples come from
    ref[clip(p + d)]; edge clipping matches `warp_frame`.
    """
    if cur_luma.shape != ref_luma.shape or cur_luma.ndim != 2:
        raise ValueError(
            f"luma planes must share a 2-D shape, got {cur_luma.shape} vs {ref_luma.shape}"
        )
    h, w = cur_luma.shape
    b, sr = config.block, config.search_range
    nby, nbx = h // b, w // b
    cur = np.asarray(cur_luma, dtype=np.float64)
    padded = np.pad(np.asarray(ref_luma, dtype=np.float64), sr, mode="edge")
    disps = _displacements(sr)
    sads = np.empty((len(disps), nby, nbx), dtype=np.float64)
    for i, (dy, dx) in enumerate(disps):
        shifted = padded[sr + dy:sr + dy + h, sr + dx:sr + dx + w]
        diff = np.abs(cur - shifted)
        sads[i] = diff.reshape(nby, b, nbx, b).sum(axis=(1, 3))
    best = np.argmin(sads, axis=0)
    table = np.asarray(disps, dtype=np.int32)
    return table[best].transpose(2, 0, 1)


def warp_frame(ref: np.ndarray, motion: np.ndarray, block: int) -> np.ndarray:
    """Clamp-gather per-block motion compensation for any channel count."""
    c, h, w = ref.shape
    dy = np.repeat(np.repeat(motion[0], block, axis=0), block, axis=1)
    dx = np.repeat(np.repeat(motion[1], block, axis=0), block, axis=1)
    ys = np.clip(np.arange(h)[:, None] + dy, 0, h - 1)
    xs = np.clip(np.arange(w)[None, :] + dx, 0, w - 1)
    return ref[:, ys, xs]


def encode_motion(motion: np.ndarray, config: CodecConfig) -> bytes:
    sr = config.search_range
    if np.any(np.abs(motion) > sr):
        raise ValueError(f"motion exceeds search range {sr}")
    enc = RangeEncoder()
    model = AdaptiveModel(config.motion_alphabet)
    flat = (motion + sr).reshape(2, -1)
    for i in range(flat.shape[1]):
        for comp in range(2):
            sym = int(flat[comp, i])
            cum, freq = model.lookup(sym)
            enc.encode(cum, freq, model.total)
            model.update(sym)
    return enc.finish()


def decode_motion(payload: bytes, nby: int, nbx: int,
                  config: CodecConfig) -> np.ndarray:
    sr = config.search_range
    dec = RangeDecoder(payload)
    model = AdaptiveModel(config.motion_alphabet)
    out = np.empty((2, nby * nbx), dtype=np.int32)
    for i in range(nby * nbx):
        for comp in range(2):
            value = dec.decode_freq(model.total)
            sym, cum, freq = model.locate(value)
            dec.consume(cum, freq)
            model.update(sym)
            out[comp, i] = sym - sr
    return out.reshape(2, nby, nbx)


def _level_token(v: int) -> int:
    a = abs(v)
    return LEVEL_BASE + 2 * (a - 1) + (1 if v < 0 else 0)


def _emit(enc: RangeEncoder, model: AdaptiveModel, sym: int) -> None:
    cum, freq = model.lookup(sym)
    enc.encode(cum, freq, model.total)
    model.update(sym)


def encode_channel_tokens(rows: np.ndarray, enc: RangeEncoder,
                          model: AdaptiveModel) -> None:
    """Token-code one channel's (nblocks, 64) scan-ordered levels."""
    for row in rows:
        run = 0
        for v in row.tolist():
            if v == 0:
                run += 1
                continue
            if run:
                _emit(enc, model, run)
                run = 0
            if abs(v) <= LEVEL_MAX:
                _emit(enc, model, _level_token(v))
            else:
                _emit(enc, model, ESC)
                for byte in struct.pack("<i", v):
                    enc.encode_raw_byte(byte)
        if run:
            _emit(enc, model, EOB)


def decode_channel_tokens(dec: RangeDecoder, model: AdaptiveModel,
                          nblocks: int) -> np.ndarray:
    rows = np.zeros((nblocks, 64), dtype=np.int32)
    for bi in range(nblocks):
        pos = 0
        expect_level = False
        while pos < 64:
            value = dec.decode_freq(model.total)
            sym, cum, freq = model.locate(value)
            dec.consume(cum, freq)
            model.update(sym)
            if sym == EOB:
                if expect_level:
                    raise BitstreamCorruptError(
                        f"end-of-block directly after a zero run in block {bi}"
                    )
                pos = 64
            elif 1 <= sym <= RUN_MAX:
                if expect_level or pos + sym > 63:
                    raise BitstreamCorruptError(
                        f"invalid zero run {sym} at position {pos} in block {bi}"
                    )
                pos += sym
                expect_level = True
            elif sym == ESC:
                raw = bytes(dec.decode_raw_byte() for _ in range(4))
                v = struct.unpack("<i", raw)[0]
                if abs(v) <= LEVEL_MAX:
                    raise BitstreamCorruptError(
                        f"escaped level {v} fits the inline range in block {bi}"
                    )
                rows[bi, pos] = v
                pos += 1
                expect_level = False
            else:
                a = (sym - LEVEL_BASE) // 2 + 1
                rows[bi, pos] = -a if (sym - LEVEL_BASE) % 2 else a
                pos += 1
                expect_level = False
    return rows


@dataclass
class CodecNets:
    """Trainable conv stacks for prediction, context update, and readout."""

    config: CodecConfig
    embed_prev: ConvParams    # 3 -> C
    fuse1: ConvParams         # 2C -> C
    fuse2: ConvParams         # C -> C
    predict: ConvParams       # C -> 3
    embed_resid: ConvParams   # 3 -> C
    ctx1: ConvParams          # 2C -> C
    ctx2: ConvParams          # C -> C
    readout: ConvParams       # C -> 3

    _LAYERS = ("embed_prev", "fuse1", "fuse2", "predict",
               "embed_resid", "ctx1", "ctx2", "readout")

    def layers(self) -> list[tuple[str, ConvParams]]:
        return [(name, getattr(self, name)) for name in self._LAYERS]

    def parameters(self) -> list:
        out = []
        for _, conv in self.layers():
            out.extend(conv.tensors())
        return out

    def named_arrays(self, prefix: str = "codec.") -> dict[str, np.ndarray]:
        arrays = {}
        for name, conv in self.layers():
            arrays[f"{prefix}{name}.kernel"] = conv.kernel.data
            arrays[f"{prefix}{name}.bias"] = conv.bias.data
        return arrays

    def deployed(self) -> "DeployedCodecNets":
        return DeployedCodecNets(
            config=self.config,
            **{name: deploy_conv(conv) for name, conv in self.layers()},
        )


@dataclass(frozen=True)
class DeployedCodecNets:
    config: CodecConfig
    embed_prev: ConvWeights
    fuse1: ConvWeights
    fuse2: ConvWeights
    predict: ConvWeights
    embed_resid: ConvWeights
    ctx1: ConvWeights
    ctx2: ConvWeights
    readout: ConvWeights


def _selector_conv(out_c: int, in_c: int, taps, rng, noise: float,
                   name: str) -> ConvParams:
    """Center-tap pass-through kernel plus scaled random perturbation."""
    std = np.sqrt(2.0 / (in_c * 9))
    kernel = rng.standard_normal((out_c, in_c, 3, 3)) * (noise * std)
    for o, i in taps:
        kernel[o, i, 1, 1] += 1.0
    return ConvParams(
        kernel=parameter(kernel, name=f"{name}.kernel"),
        bias=parameter(np.zeros(out_c), name=f"{name}.bias"),
    )


def build_codec_nets(config: CodecConfig, seed: int,
                     prediction_noise: float = 0.02,
                     state_gain: float = 1.0,
                     readout_gain: float = 0.25) -> CodecNets:
    """Initial nets: the prediction path starts as a motion-compensated
    copy (plus `prediction_noise` jitter); the context/readout path starts
    random so training has to earn its correction."""
    c = config.context_channels
    rng = np.random.default_rng(seed)
    identity = [(i, i) for i in range(min(3, c))]
    return CodecNets(
        config=config,
        embed_prev=_selector_conv(c, 3, identity, rng, prediction_noise, "embed_prev"),
        fuse1=_selector_conv(c, 2 * c, [(i, i) for i in range(c)], rng,
                             prediction_noise, "fuse1"),
        fuse2=_selector_conv(c, c, [(i, i) for i in range(c)], rng,
                             prediction_noise, "fuse2"),
        predict=_selector_conv(3, c, identity, rng, prediction_noise, "predict"),
        embed_resid=he_conv_params(c, 3, rng, gain=state_gain, name="embed_resid"),
        ctx1=he_conv_params(c, 2 * c, rng, gain=state_gain, name="ctx1"),
        ctx2=he_conv_params(c, c, rng, gain=state_gain, name="ctx2"),
        readout=he_conv_params(3, c, rng, gain=readout_gain, name="readout"),
    )


def nets_from_arrays(arrays: dict[str, np.ndarray], config: CodecConfig,
                     prefix: str = "codec.") -> CodecNets:
    from .errors import WeightFormatError

    convs = {}
    for name in CodecNets._LAYERS:
        kkey, bkey = f"{prefix}{name}.kernel", f"{prefix}{name}.bias"
        if kkey not in arrays or bkey not in arrays:
            raise WeightFormatError(f"weight bundle is missing {kkey} or {bkey}")
        convs[name] = ConvParams(
            kernel=parameter(arrays[kkey], name=kkey),
            bias=parameter(arrays[bkey], name=bkey),
        )
    nets = CodecNets(config=config, **convs)
    c = config.context_channels
    if nets.embed_prev.kernel.data.shape != (c, 3, 3, 3):
        raise WeightFormatError(
            f"embed_prev kernel shape {nets.embed_prev.kernel.data.shape} does not "
            f"match {c} context channels"
        )
    return nets


def predict_frame(nets: DeployedCodecNets, aligned_prev: np.ndarray,
                  aligned_ctx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """float32 prediction pass; returns (pred (3,h,w), fused (C,h,w))."""
    prev = np.ascontiguousarray(aligned_prev, dtype=np.float32)[None]
    ctx = np.ascontiguousarray(aligned_ctx, dtype=np.float32)[None]
    feat = conv3x3_infer(prev, nets.embed_prev)
    z = conv3x3_infer(np.concatenate([feat, ctx], axis=1), nets.fuse1)
    np.maximum(z, 0.0, out=z)
    fused = conv3x3_infer(z, nets.fuse2)
    pred = conv3x3_infer(fused, nets.predict)
    return pred[0], fused[0]


def update_context(nets: DeployedCodecNets, fused: np.ndarray,
                   resid_hat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """float32 context update; returns (new_ctx (C,h,w), correction (3,h,w))."""
    emb = conv3x3_infer(resid_hat.astype(np.float32)[None], nets.embed_resid)
    z = conv3x3_infer(np.concatenate([fused[None], emb], axis=1), nets.ctx1)
    np.maximum(z, 0.0, out=z)
    ctx = np.tanh(conv3x3_infer(z, nets.ctx2))
    correction = conv3x3_infer(ctx, nets.readout)
    return ctx[0], correction[0]


def code_residual(resid: np.ndarray, step: float) -> tuple[bytes, np.ndarray]:
    """Transform-quantize-code a (3, h, w) residual.

    Returns (payload, resid_hat float32) where resid_hat is exactly what a
    decoder will reproduce from the payload.
    """
    _, h, w = resid.shape
    coef = block_dct2(np.asarray(resid, dtype=np.float64))
    levels = quantize(coef, step)
    rows = zigzag_blocks(levels)
    enc = RangeEncoder()
    for ch in range(rows.shape[0]):
        model = AdaptiveModel(TOKEN_ALPHABET)
        encode_channel_tokens(rows[ch], enc, model)
    payload = enc.finish()
    resid_hat = block_idct2(dequantize(levels, step)).astype(np.float32)
    return payload, resid_hat


def decode_residual(payload: bytes, step: float, shape: tuple[int, int, int]) -> np.ndarray:
    c, h, w = shape
    nblocks = (h // 8) * (w // 8)
    dec = RangeDecoder(payload)
    rows = np.empty((c, nblocks, 64), dtype=np.int32)
    for ch in range(c):
        model = AdaptiveModel(TOKEN_ALPHABET)
        rows[ch] = decode_channel_tokens(dec, model, nblocks)
    levels = unzigzag_blocks(rows, h, w)
    return block_idct2(dequantize(levels, step)).astype(np.float32)


def _reconstruct(nets: DeployedCodecNets, pred: np.ndarray, fused: np.ndarray,
                 resid_hat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    new_ctx, correction = update_context(nets, fused, resid_hat)
    recon = np.clip(pred + resid_hat + correction, 0.0, 1.0)
    return recon, new_ctx


@dataclass
class FrameCode:
    motion_payload: bytes
    latent_payload: bytes
    recon: np.ndarray      # (3, h, w) float32
    context: np.ndarray    # (C, h, w) float32
    rate_bits: int
    distortion: float      # mean squared error against the source frame


def frame_rate_bits(motion_payload: bytes, latent_payload: bytes) -> int:
    # one flags byte plus both payloads; fixed framing is excluded
    return 8 * (1 + len(motion_payload) + len(latent_payload))


def code_frame_given_motion(x: np.ndarray, prev_recon: np.ndarray,
                            context: np.ndarray, motion: np.ndarray,
                            motion_payload: bytes, nets: DeployedCodecNets,
                            quality: int) -> FrameCode:
    """Encode one frame against a fixed motion field and a given context."""
    config = nets.config
    config.check_frame(x)
    step = config.quality_steps[quality]
    aligned_prev = warp_frame(np.asarray(prev_recon, dtype=np.float32),
                              motion, config.block)
    aligned_ctx = warp_frame(np.asarray(context, dtype=np.float32),
                             motion, config.block)
    pred, fused = predict_frame(nets, aligned_prev, aligned_ctx)
    resid = np.asarray(x, dtype=np.float32) - pred
    latent_payload, resid_hat = code_residual(resid, step)
    recon, new_ctx = _reconstruct(nets, pred, fused, resid_hat)
    dist = float(np.mean((np.asarray(x, dtype=np.float64) - recon.astype(np.float64)) ** 2))
    return FrameCode(
        motion_payload=motion_payload,
        latent_payload=latent_payload,
        recon=recon,
        context=new_ctx,
        rate_bits=frame_rate_bits(motion_payload, latent_payload),
        distortion=dist,
    )


def code_frame(x: np.ndarray, prev_recon: np.ndarray, context: np.ndarray,
               nets: DeployedCodecNets, quality: int) -> FrameCode:
    """Motion search plus `code_frame_given_motion` in one step."""
    config = nets.config
    config.check_frame(x)
    motion = motion_estimate(rgb_to_luma(x), rgb_to_luma(prev_recon), config)
    payload = encode_motion(motion, config)
    return code_frame_given_motion(x, prev_recon, context, motion, payload,
                                   nets, quality)


def decode_frame(motion_payload: bytes, latent_payload: bytes,
                 prev_recon: np.ndarray, context: np.ndarray,
                 nets: DeployedCodecNets, quality: int) -> tuple[np.ndarray, np.ndarray]:
    """Decoder mirror of `code_frame_given_motion`; returns (recon, context)."""
    config = nets.config
    step = config.quality_steps[quality]
    _, h, w = prev_recon.shape
    motion = decode_motion(motion_payload, h // config.block, w // config.block, config)
    aligned_prev = warp_frame(np.asarray(prev_recon, dtype=np.float32),
                              motion, config.block)
    aligned_ctx = warp_frame(np.asarray(context, dtype=np.float32),
                             motion, config.block)
    pred, fused = predict_frame(nets, aligned_prev, aligned_ctx)
    resid_hat = decode_residual(latent_payload, step, (3, h, w))
    return _reconstruct(nets, pred, fused, resid_hat)


def black_frame(h: int, w: int) -> np.ndarray:
    return np.zeros((3, h, w), dtype=np.float32)


def zero_context(config: CodecConfig, h: int, w: int) -> np.ndarray:
    return np.zeros((config.context_channels, h, w), dtype=np.float32)
