"""Distortion metrics and two-curve rate comparison.

Rate deltas between codecs are computed the classic way: cubic fit of
log10(rate) against PSNR per curve, integrate the gap over the common
quality interval, convert the mean log offset back to a percentage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

PSNR_CAP_DB = 100.0
MIN_OVERLAP_DB = 1.0


def frame_mse(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def psnr(mse: float, peak: float = 1.0) -> float:
    """10*log10(peak^2/mse), capped at 100 dB (exactly 100 for mse = 0)."""
    if mse < 0:
        raise ValueError(f"mse must be non-negative, got {mse}")
    if peak <= 0:
        raise ValueError(f"peak must be positive, got {peak}")
    if mse == 0:
        return PSNR_CAP_DB
    return min(10.0 * math.log10(peak * peak / mse), PSNR_CAP_DB)


@dataclass(frozen=True)
class RDPoint:
    rate: float      # caller-chosen unit (bits or bits per pixel), kept consistent
    psnr_db: float

    def __post_init__(self):
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise ValueError(f"rate must be positive and finite, got {self.rate}")
        if not math.isfinite(self.psnr_db):
            raise ValueError(f"psnr_db must be finite, got {self.psnr_db}")


@dataclass(frozen=True)
class RDCurve:
    points: tuple[RDPoint, ...]

    def __post_init__(self):
        if len(self.points) < 4:
            raise ValueError(f"need at least 4 rate points, got {len(self.points)}")
        rates = [p.rate for p in self.points]
        quals = [p.psnr_db for p in self.points]
        if any(a >= b for a, b in zip(rates, rates[1:])):
            raise ValueError(f"rates must be strictly increasing, got {rates}")
        if any(a >= b for a, b in zip(quals, quals[1:])):
            raise ValueError(f"quality must be strictly increasing, got {quals}")

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[float, float]]) -> "RDCurve":
        return cls(tuple(RDPoint(rate=r, psnr_db=q) for r, q in pairs))

    def rates(self) -> np.ndarray:
        return np.array([p.rate for p in self.points])

    def qualities(self) -> np.ndarray:
        return np.array([p.psnr_db for p in self.points])


def _log_rate_fit(curve: RDCurve, center: float) -> np.ndarray:
    return np.polyfit(curve.qualities() - center, np.log10(curve.rates()), 3)


def _mean_log_rate(coeffs: np.ndarray, lo: float, hi: float) -> float:
    integral = np.polyint(coeffs)
    return float(np.polyval(integral, hi) - np.polyval(integral, lo)) / (hi - lo)


def bd_rate(anchor: RDCurve, test: RDCurve) -> float:
    """Average rate difference of `test` against `anchor`, in percent.

    Negative values mean `test` needs fewer bits for equal quality.
    """
    lo = max(anchor.qualities().min(), test.qualities().min())
    hi = min(anchor.qualities().max(), test.qualities().max())
    if hi - lo < MIN_OVERLAP_DB:
        raise ValueError(
            f"quality ranges overlap by {hi - lo:.3f} dB, need >= {MIN_OVERLAP_DB}"
        )
    center = (lo + hi) / 2.0
    fit_a = _log_rate_fit(anchor, center)
    fit_t = _log_rate_fit(test, center)
    diff = _mean_log_rate(fit_t, lo - center, hi - center) \
        - _mean_log_rate(fit_a, lo - center, hi - center)
    return float((10.0 ** diff - 1.0) * 100.0)


def fit_residual(curve: RDCurve) -> float:
    """Largest |log10(rate) - fitted| over the curve's own points."""
    center = float(curve.qualities().mean())
    coeffs = _log_rate_fit(curve, center)
    predicted = np.polyval(coeffs, curve.qualities() - center)
    return float(np.max(np.abs(predicted - np.log10(curve.rates()))))


@dataclass(frozen=True)
class SequenceScore:
    total_bits: int
    bpp: float
    mean_mse: float
    psnr_db: float

    def rd_point(self) -> RDPoint:
        return RDPoint(rate=self.bpp, psnr_db=self.psnr_db)


def sequence_rd(frames: Sequence[np.ndarray], reconstructions: Sequence[np.ndarray],
                rate_bits: Sequence[int]) -> SequenceScore:
    """Aggregate per-frame results into one rate point.

    Quality is the PSNR of the mean per-frame MSE (not the mean of the
    per-frame PSNRs); rate is total bits plus bits per pixel.
    """
    if not (len(frames) == len(reconstructions) == len(rate_bits)):
        raise ValueError(
            f"length mismatch: {len(frames)} frames, {len(reconstructions)} "
            f"reconstructions, {len(rate_bits)} rates"
        )
    if not frames:
        raise ValueError("need at least one frame")
    mses = [frame_mse(x, y) for x, y in zip(frames, reconstructions)]
    mean_mse = float(np.mean(mses))
    total = int(sum(rate_bits))
    _, h, w = frames[0].shape
    return SequenceScore(
        total_bits=total,
        bpp=total / (h * w * len(frames)),
        mean_mse=mean_mse,
        psnr_db=psnr(mean_mse),
    )
