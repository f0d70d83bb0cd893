import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from confre.metrics import (
    RDCurve,
    RDPoint,
    bd_rate,
    fit_residual,
    frame_mse,
    psnr,
    sequence_rd,
)


def curve(pairs):
    return RDCurve.from_pairs(pairs)


BASE = [(0.05, 30.0), (0.10, 33.5), (0.22, 36.8), (0.47, 40.1)]


def scaled(factor):
    return curve([(r * factor, q) for r, q in BASE])


def trapezoid_bd_rate(anchor, test, n=200_001):
    """Numeric-quadrature oracle over the same cubic fits."""
    lo = max(anchor.qualities().min(), test.qualities().min())
    hi = min(anchor.qualities().max(), test.qualities().max())
    center = (lo + hi) / 2.0
    grid = np.linspace(lo - center, hi - center, n)
    fa = np.polyfit(anchor.qualities() - center, np.log10(anchor.rates()), 3)
    ft = np.polyfit(test.qualities() - center, np.log10(test.rates()), 3)
    gap = np.polyval(ft, grid) - np.polyval(fa, grid)
    avg = np.trapezoid(gap, grid) / (grid[-1] - grid[0])
    return (10.0 ** avg - 1.0) * 100.0


class TestPsnr:
    def test_hand_values(self):
        assert psnr(0.01, 1.0) == pytest.approx(20.0, abs=1e-12)
        assert psnr(4.0, 2.0) == pytest.approx(0.0, abs=1e-12)
        assert psnr(0.02) == pytest.approx(16.98970004336019, abs=1e-10)

    def test_zero_mse_clamps_to_100(self):
        assert psnr(0.0) == 100.0

    def test_tiny_mse_also_capped(self):
        assert psnr(1e-13) == 100.0
        assert psnr(1e-9) < 100.0

    def test_negative_mse_rejected(self):
        with pytest.raises(ValueError, match="non-negative"):
            psnr(-1e-9)

    def test_bad_peak_rejected(self):
        with pytest.raises(ValueError, match="peak"):
            psnr(0.1, 0.0)

    def test_frame_mse(self):
        a = np.zeros((3, 4, 4))
        b = np.full((3, 4, 4), 0.5)
        assert frame_mse(a, b) == pytest.approx(0.25)
        with pytest.raises(ValueError, match="mismatch"):
            frame_mse(a, np.zeros((3, 4, 5)))


class TestCurveValidation:
    def test_needs_four_points(self):
        with pytest.raises(ValueError, match="4 rate points"):
            curve(BASE[:3])

    def test_rates_strictly_increasing(self):
        bad = [(0.05, 30.0), (0.05, 33.0), (0.2, 36.0), (0.4, 40.0)]
        with pytest.raises(ValueError, match="rates"):
            curve(bad)

    def test_quality_strictly_increasing(self):
        bad = [(0.05, 30.0), (0.1, 29.0), (0.2, 36.0), (0.4, 40.0)]
        with pytest.raises(ValueError, match="quality"):
            curve(bad)

    def test_point_validation(self):
        with pytest.raises(ValueError, match="rate"):
            RDPoint(rate=0.0, psnr_db=30.0)
        with pytest.raises(ValueError, match="finite"):
            RDPoint(rate=1.0, psnr_db=math.inf)


class TestBdRate:
    def test_identical_curves_exactly_zero(self):
        a = curve(BASE)
        assert bd_rate(a, curve(BASE)) == 0.0

    def test_double_rate_is_plus_100(self):
        assert bd_rate(curve(BASE), scaled(2.0)) == pytest.approx(100.0, abs=1e-6)

    def test_half_rate_is_minus_50(self):
        assert bd_rate(curve(BASE), scaled(0.5)) == pytest.approx(-50.0, abs=1e-6)

    def test_antisymmetry_for_offset_curves(self):
        fwd = bd_rate(curve(BASE), scaled(2.0))
        back = bd_rate(scaled(2.0), curve(BASE))
        assert back == pytest.approx((1.0 / (1.0 + fwd / 100.0) - 1.0) * 100.0, abs=1e-6)

    def test_uniform_rescale_invariance(self):
        a, b = curve(BASE), scaled(1.3)
        ref = bd_rate(a, b)
        got = bd_rate(scaled(3.7), curve([(r * 3.7 * 1.3, q) for r, q in BASE]))
        assert got == pytest.approx(ref, abs=1e-9)

    def test_cubic_fit_interpolates_four_points(self):
        assert fit_residual(curve(BASE)) < 1e-9

    def test_insufficient_overlap_rejected(self):
        low = curve([(0.05, 20.0), (0.1, 21.0), (0.2, 22.0), (0.4, 23.0)])
        high = curve([(0.05, 23.9), (0.1, 25.0), (0.2, 26.0), (0.4, 27.0)])
        with pytest.raises(ValueError, match="overlap"):
            bd_rate(low, high)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_matches_trapezoid_oracle(self, seed):
        rng = np.random.default_rng(seed)
        quals_a = np.sort(rng.uniform(28, 42, 4))
        quals_b = np.sort(rng.uniform(28, 42, 4))
        # regenerate until both spreads are healthy and overlap is ample
        while quals_a[-1] - quals_a[0] < 4 or quals_b[-1] - quals_b[0] < 4 or \
                min(quals_a[-1], quals_b[-1]) - max(quals_a[0], quals_b[0]) < 2:
            quals_a = np.sort(rng.uniform(28, 42, 4))
            quals_b = np.sort(rng.uniform(28, 42, 4))
        rates_a = np.sort(rng.uniform(0.02, 1.0, 4))
        rates_b = np.sort(rng.uniform(0.02, 1.0, 4))
        while len(set(rates_a)) < 4 or len(set(rates_b)) < 4:
            rates_a = np.sort(rng.uniform(0.02, 1.0, 4))
            rates_b = np.sort(rng.uniform(0.02, 1.0, 4))
        a = curve(list(zip(rates_a, quals_a)))
        b = curve(list(zip(rates_b, quals_b)))
        got = bd_rate(a, b)
        want = trapezoid_bd_rate(a, b)
        assert got == pytest.approx(want, rel=1e-6, abs=1e-6)


class TestSequenceRd:
    def test_identical_frames_hit_cap(self):
        f = [np.random.default_rng(0).random((3, 8, 8))]
        score = sequence_rd(f, [f[0].copy()], [1234])
        assert score.psnr_db == 100.0
        assert score.total_bits == 1234
        assert score.bpp == pytest.approx(1234 / (8 * 8 * 1))

    def test_mean_mse_hand_value(self):
        base = np.zeros((3, 4, 4))
        recon1 = base + math.sqrt(0.01)
        recon2 = base + math.sqrt(0.03)
        score = sequence_rd([base, base], [recon1, recon2], [100, 200])
        assert score.mean_mse == pytest.approx(0.02, abs=1e-12)
        assert score.psnr_db == pytest.approx(16.98970004336019, abs=1e-9)
        assert score.bpp == pytest.approx(300 / (4 * 4 * 2))

    def test_length_mismatch_rejected(self):
        f = [np.zeros((3, 4, 4))]
        with pytest.raises(ValueError, match="length"):
            sequence_rd(f, f + f, [1, 2])

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="at least one"):
            sequence_rd([], [], [])
