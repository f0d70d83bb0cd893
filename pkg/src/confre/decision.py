"""Per-frame adaptive choice between plain and filtered-context coding.

Each frame is encoded twice: once against the stored context (zeroed
first when a refresh is scheduled) and once against a filtered copy of
the context taken BEFORE any zeroing, so at refresh frames the choice is
between a fresh start and a filtered continuation.  The filtered path is
taken only when it strictly improves distortion, and beyond a small
per-period budget it must also justify its rate through a progressive
criterion that tolerates rate increases early in the sequence and almost
none near the end.

Reconstruction enhancement is decided afterwards on displayed quality
alone; it never feeds back into the coding loop.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .bitstream import FLAG_CF, FLAG_RE, FLAG_REFRESH, FrameRecord
from .codec import (
    CodecConfig,
    DeployedCodecNets,
    FrameCode,
    black_frame,
    code_frame_given_motion,
    decode_frame,
    encode_motion,
    motion_estimate,
    rgb_to_luma,
    zero_context,
)
from .errors import BadInputError, BitstreamCorruptError
from .filters import DeployedFilter, filter_forward
from .metrics import SequenceScore, frame_mse, psnr, sequence_rd

TRACE_HEADER = "t,r1_bits,r2_bits,d1,d2,f_cf,f_re,rate_bits,psnr_db,refresh"


@dataclass(frozen=True)
class DecisionParams:
    """Knobs of the per-frame decision.

    `refresh_period=None` means the context is zeroed only once, at the
    first frame (the all-inter, low-delay configuration).
    """

    refresh_period: int | None = 32
    max_quality_count: int = 2
    progressive_factor: float = 0.16
    total_frames: int = 1

    def __post_init__(self):
        if self.refresh_period is not None and self.refresh_period < 1:
            raise ValueError(f"refresh_period must be >= 1 or None, got {self.refresh_period}")
        if self.max_quality_count < 0:
            raise ValueError(f"max_quality_count must be >= 0, got {self.max_quality_count}")
        if self.progressive_factor < 0:
            raise ValueError(f"progressive_factor must be >= 0, got {self.progressive_factor}")
        if self.total_frames < 1:
            raise ValueError(f"total_frames must be >= 1, got {self.total_frames}")


@dataclass(frozen=True)
class DecisionState:
    """Count of filtered-path activations in the current refresh period."""

    activations: int = 0

    def __post_init__(self):
        if self.activations < 0:
            raise ValueError("activations must be >= 0")


def refresh_due(t: int, refresh_period: int | None) -> bool:
    if t == 0:
        return True
    return refresh_period is not None and t % refresh_period == 0


def progressive_loss(rate_plain: float, rate_filtered: float, t: int,
                     params: DecisionParams) -> float:
    """Relative rate increase minus an allowance that shrinks to zero at
    the end of the sequence; negative means the increase is acceptable."""
    if rate_plain <= 0:
        raise ValueError(f"plain-path rate must be positive, got {rate_plain}")
    if not 0 <= t < params.total_frames:
        raise ValueError(f"frame index {t} outside [0, {params.total_frames})")
    allowance = params.progressive_factor * (1.0 - t / params.total_frames)
    return (rate_filtered - rate_plain) / rate_plain - allowance


@dataclass(frozen=True)
class FilterChoice:
    use_filtered: bool
    progressive_loss: float | None   # None when the criterion was not consulted
    state: DecisionState


def decide_contextual(rate_plain: float, dist_plain: float,
                      rate_filtered: float, dist_filtered: float,
                      t: int, state: DecisionState,
                      params: DecisionParams) -> FilterChoice:
    """One step of the adaptive decision; also applies the refresh reset."""
    use = False
    ploss = None
    activations = state.activations
    if dist_filtered < dist_plain:
        if activations < params.max_quality_count:
            use = True
        else:
            ploss = progressive_loss(rate_plain, rate_filtered, t, params)
            use = ploss < 0.0
    if use:
        activations += 1
    if refresh_due(t, params.refresh_period):
        activations = 0
    return FilterChoice(use_filtered=use, progressive_loss=ploss,
                        state=DecisionState(activations))


def decide_reconstruction(dist_chosen: float, dist_enhanced: float) -> bool:
    """Enhance only on strict improvement; ties keep the coded frame."""
    return dist_enhanced < dist_chosen


@dataclass(frozen=True)
class FrameTrace:
    t: int
    rate_plain_bits: int
    rate_filtered_bits: int | None
    dist_plain: float
    dist_filtered: float | None
    use_filtered: bool
    use_enhanced: bool
    rate_bits: int
    psnr_db: float
    refresh: bool
    progressive_loss: float | None


@dataclass
class SequenceResult:
    records: list[FrameRecord]
    trace: list[FrameTrace]
    displays: list[np.ndarray]   # post-enhancement output frames
    recons: list[np.ndarray]     # coding-loop reconstructions
    contexts: list[np.ndarray]   # stored context after each frame
    score: SequenceScore


def _check_frames(frames: np.ndarray, config: CodecConfig) -> np.ndarray:
    frames = np.asarray(frames, dtype=np.float32)
    if frames.ndim != 4 or frames.shape[1] != 3:
        raise BadInputError(f"expected (frames, 3, h, w) input, got shape {frames.shape}")
    if frames.shape[0] < 1:
        raise BadInputError("need at least one frame")
    if frames.shape[2] % config.block or frames.shape[3] % config.block:
        raise BadInputError(
            f"frame dims must be multiples of {config.block}, got "
            f"{frames.shape[2]}x{frames.shape[3]}; pad first"
        )
    if not np.isfinite(frames).all():
        raise BadInputError("frames contain non-finite values")
    if frames.min() < 0.0 or frames.max() > 1.0:
        raise BadInputError("frame values must lie in [0, 1]")
    return frames


def _enhance(re: DeployedFilter, recon: np.ndarray) -> np.ndarray:
    return np.clip(filter_forward(re, recon), 0.0, 1.0)


def encode_sequence(frames: np.ndarray, nets: DeployedCodecNets, quality: int,
                    params: DecisionParams,
                    cf: DeployedFilter | None = None,
                    re: DeployedFilter | None = None) -> SequenceResult:
    """Drive the codec plus decision logic over a whole sequence.

    `cf=None` disables the filtered candidate entirely (plain anchor);
    `re=None` disables display-side enhancement.
    """
    config = nets.config
    frames = _check_frames(frames, config)
    if params.total_frames != frames.shape[0]:
        raise BadInputError(
            f"params.total_frames={params.total_frames} but got {frames.shape[0]} frames"
        )
    if not 0 <= quality < len(config.quality_steps):
        raise BadInputError(
            f"quality index {quality} outside the {len(config.quality_steps)}-point ladder"
        )
    _, _, h, w = frames.shape
    prev_recon = black_frame(h, w)
    stored_ctx = zero_context(config, h, w)
    state = DecisionState(0)

    records: list[FrameRecord] = []
    trace: list[FrameTrace] = []
    displays: list[np.ndarray] = []
    recons: list[np.ndarray] = []
    contexts: list[np.ndarray] = []

    for t in range(frames.shape[0]):
        x = frames[t]
        refresh = refresh_due(t, params.refresh_period)
        filtered_ctx = filter_forward(cf, stored_ctx) if cf is not None else None
        if refresh:
            stored_ctx = zero_context(config, h, w)

        motion = motion_estimate(rgb_to_luma(x), rgb_to_luma(prev_recon), config)
        motion_payload = encode_motion(motion, config)
        plain = code_frame_given_motion(x, prev_recon, stored_ctx, motion,
                                        motion_payload, nets, quality)

        filtered: FrameCode | None = None
        if filtered_ctx is not None:
            filtered = code_frame_given_motion(x, prev_recon, filtered_ctx, motion,
                                               motion_payload, nets, quality)
            choice = decide_contextual(plain.rate_bits, plain.distortion,
                                       filtered.rate_bits, filtered.distortion,
                                       t, state, params)
        else:
            choice = FilterChoice(False, None,
                                  DecisionState(0) if refresh else state)
        state = choice.state
        chosen = filtered if choice.use_filtered else plain

        use_enhanced = False
        display = chosen.recon
        final_mse = chosen.distortion
        if re is not None:
            enhanced = _enhance(re, chosen.recon)
            dist_enhanced = frame_mse(x, enhanced)
            use_enhanced = decide_reconstruction(chosen.distortion, dist_enhanced)
            if use_enhanced:
                display = enhanced
                final_mse = dist_enhanced

        flags = (FLAG_CF if choice.use_filtered else 0) \
            | (FLAG_RE if use_enhanced else 0) \
            | (FLAG_REFRESH if refresh else 0)
        records.append(FrameRecord(flags=flags, motion=motion_payload,
                                   latent=chosen.latent_payload))
        trace.append(FrameTrace(
            t=t,
            rate_plain_bits=plain.rate_bits,
            rate_filtered_bits=filtered.rate_bits if filtered is not None else None,
            dist_plain=plain.distortion,
            dist_filtered=filtered.distortion if filtered is not None else None,
            use_filtered=choice.use_filtered,
            use_enhanced=use_enhanced,
            rate_bits=chosen.rate_bits,
            psnr_db=psnr(final_mse),
            refresh=refresh,
            progressive_loss=choice.progressive_loss,
        ))
        displays.append(display)
        recons.append(chosen.recon)
        contexts.append(chosen.context)
        prev_recon = chosen.recon
        stored_ctx = chosen.context

    score = sequence_rd(list(frames), displays, [r.rate_bits for r in records])
    return SequenceResult(records=records, trace=trace, displays=displays,
                          recons=recons, contexts=contexts, score=score)


@dataclass
class DecodedSequence:
    displays: list[np.ndarray]
    recons: list[np.ndarray]
    contexts: list[np.ndarray]


def decode_sequence(records: list[FrameRecord], nets: DeployedCodecNets,
                    quality: int, refresh_period: int | None,
                    height: int, width: int,
                    cf: DeployedFilter | None = None,
                    re: DeployedFilter | None = None) -> DecodedSequence:
    """Replay a record list into frames; mirrors `encode_sequence` exactly."""
    config = nets.config
    if height % config.block or width % config.block:
        raise BadInputError(
            f"decode dims must be multiples of {config.block}, got {height}x{width}"
        )
    prev_recon = black_frame(height, width)
    stored_ctx = zero_context(config, height, width)
    displays: list[np.ndarray] = []
    recons: list[np.ndarray] = []
    contexts: list[np.ndarray] = []

    for t, rec in enumerate(records):
        refresh = refresh_due(t, refresh_period)
        if rec.refresh != refresh:
            raise BitstreamCorruptError(
                f"record {t} refresh flag {int(rec.refresh)} contradicts the "
                f"schedule (period {refresh_period})"
            )
        if rec.f_cf:
            if cf is None:
                raise BadInputError(
                    f"record {t} was coded with contextual filtering but no "
                    f"filter weights were provided"
                )
            ctx_used = filter_forward(cf, stored_ctx)
        elif refresh:
            ctx_used = zero_context(config, height, width)
        else:
            ctx_used = stored_ctx
        recon, new_ctx = decode_frame(rec.motion, rec.latent, prev_recon,
                                      ctx_used, nets, quality)
        display = recon
        if rec.f_re:
            if re is None:
                raise BadInputError(
                    f"record {t} requests enhancement but no enhancer weights "
                    f"were provided"
                )
            display = _enhance(re, recon)
        displays.append(display)
        recons.append(recon)
        contexts.append(new_ctx)
        prev_recon = recon
        stored_ctx = new_ctx
    return DecodedSequence(displays=displays, recons=recons, contexts=contexts)


def write_trace_csv(path, trace: list[FrameTrace]) -> None:
    def fmt(value):
        if value is None:
            return ""
        if isinstance(value, bool):
            return str(int(value))
        if isinstance(value, float):
            return repr(value)
        return str(value)

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER.split(","))
        for row in trace:
            writer.writerow([
                fmt(row.t),
                fmt(row.rate_plain_bits),
                fmt(row.rate_filtered_bits),
                fmt(row.dist_plain),
                fmt(row.dist_filtered),
                fmt(row.use_filtered),
                fmt(row.use_enhanced),
                fmt(row.rate_bits),
                fmt(row.psnr_db),
                fmt(row.refresh),
            ])
