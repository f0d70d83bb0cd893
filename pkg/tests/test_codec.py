import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from confre.codec import (
    EOB,
    ESC,
    LEVEL_BASE,
    TOKEN_ALPHABET,
    CodecConfig,
    black_frame,
    build_codec_nets,
    code_frame,
    code_frame_given_motion,
    code_residual,
    decode_channel_tokens,
    decode_frame,
    decode_motion,
    decode_residual,
    encode_channel_tokens,
    encode_motion,
    frame_rate_bits,
    motion_estimate,
    nets_from_arrays,
    predict_frame,
    rgb_to_luma,
    warp_frame,
    zero_context,
)
from confre.dct import block_idct2, dequantize
from confre.errors import BitstreamCorruptError, WeightFormatError
from confre.rangecoder import AdaptiveModel, RangeDecoder, RangeEncoder


def naive_motion(cur, ref, block, sr):
    """Loop-based search with the same clamp and tie rules."""
    h, w = cur.shape
    out = np.zeros((2, h // block, w // block), dtype=np.int32)
    ys_all = np.arange(h)
    xs_all = np.arange(w)
    for bi in range(h // block):
        for bj in range(w // block):
            cb = cur[bi * block:(bi + 1) * block, bj * block:(bj + 1) * block]
            best_key, best_d = None, None
            for dy in range(-sr, sr + 1):
                for dx in range(-sr, sr + 1):
                    ys = np.clip(ys_all[bi * block:(bi + 1) * block] + dy, 0, h - 1)
                    xs = np.clip(xs_all[bj * block:(bj + 1) * block] + dx, 0, w - 1)
                    sad = float(np.abs(cb - ref[np.ix_(ys, xs)]).sum())
                    key = (sad, abs(dy) + abs(dx), dy, dx)
                    if best_key is None or key < best_key:
                        best_key, best_d = key, (dy, dx)
            out[:, bi, bj] = best_d
    return out


def emit_symbols(symbols, alphabet=TOKEN_ALPHABET):
    """Drive a fresh coder with an explicit symbol/raw-byte script."""
    enc = RangeEncoder()
    model = AdaptiveModel(alphabet)
    for item in symbols:
        if isinstance(item, tuple):  # ("raw", byte)
            enc.encode_raw_byte(item[1])
            continue
        cum, freq = model.lookup(item)
        enc.encode(cum, freq, model.total)
        model.update(item)
    return enc.finish()


def tokens_payload(rows):
    enc = RangeEncoder()
    model = AdaptiveModel(TOKEN_ALPHABET)
    encode_channel_tokens(np.asarray(rows, dtype=np.int32), enc, model)
    return enc.finish()


CFG = CodecConfig(search_range=4, context_channels=8)


class TestConfig:
    def test_defaults(self):
        cfg = CodecConfig()
        assert cfg.block == 8 and cfg.search_range == 8
        assert cfg.context_channels == 16
        assert cfg.quality_steps == (32 / 255, 16 / 255, 8 / 255, 4 / 255)
        assert cfg.quality_lambdas == (256.0, 1024.0, 4096.0, 16384.0)
        assert cfg.motion_alphabet == 17

    @pytest.mark.parametrize("kwargs", [
        {"block": 16},
        {"search_range": 0},
        {"search_range": 200},
        {"context_channels": 0},
        {"quality_steps": (0.1,)},
        {"quality_steps": (0.0, 0.1), "quality_lambdas": (1.0, 2.0)},
        {"quality_lambdas": (1.0, -2.0, 3.0, 4.0)},
    ])
    def test_invalid_rejected(self, kwargs):
        with pytest.raises(ValueError):
            CodecConfig(**kwargs)

    def test_check_frame(self):
        cfg = CodecConfig()
        with pytest.raises(ValueError, match="multiples"):
            cfg.check_frame(np.zeros((3, 12, 16), dtype=np.float32))
        with pytest.raises(ValueError, match="frame"):
            cfg.check_frame(np.zeros((4, 16, 16), dtype=np.float32))
        cfg.check_frame(np.zeros((3, 16, 16), dtype=np.float32))


class TestLuma:
    def test_channel_weights(self):
        f = np.zeros((3, 2, 2))
        f[0] = 1.0
        assert np.allclose(rgb_to_luma(f), 0.299)
        f[:] = 0.0
        f[1] = 1.0
        assert np.allclose(rgb_to_luma(f), 0.587)
        f[:] = 0.0
        f[2] = 1.0
        assert np.allclose(rgb_to_luma(f), 0.114)

    def test_weights_sum_to_one(self):
        assert np.allclose(rgb_to_luma(np.ones((3, 4, 4))), 1.0)


class TestMotion:
    @settings(max_examples=12, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_matches_naive_search(self, seed):
        rng = np.random.default_rng(seed)
        # integer luma keeps every SAD sum exact regardless of add order
        cur = rng.integers(0, 256, size=(16, 16)).astype(np.float64)
        ref = rng.integers(0, 256, size=(16, 16)).astype(np.float64)
        cfg = CodecConfig(search_range=3)
        got = motion_estimate(cur, ref, cfg)
        want = naive_motion(cur, ref, 8, 3)
        assert np.array_equal(got, want)

    def test_recovers_pure_translation(self):
        rng = np.random.default_rng(7)
        canvas = rng.integers(0, 256, size=(48, 48)).astype(np.float64)
        sr = 4
        ref = canvas[sr:sr + 32, sr:sr + 32]
        cur = canvas[sr + 3:sr + 35, sr - 2:sr + 30]  # cur[p] = ref[p + (3, -2)]
        motion = motion_estimate(cur, ref, CodecConfig(search_range=sr))
        assert motion[0, 1, 1] == 3 and motion[1, 1, 1] == -2
        assert motion[0, 2, 2] == 3 and motion[1, 2, 2] == -2

    def test_identical_frames_give_zero_motion(self):
        rng = np.random.default_rng(1)
        f = rng.integers(0, 256, size=(24, 24)).astype(np.float64)
        motion = motion_estimate(f, f, CodecConfig(search_range=5))
        assert not motion.any()

    def test_payload_roundtrip(self):
        rng = np.random.default_rng(5)
        cfg = CodecConfig(search_range=6)
        motion = rng.integers(-6, 7, size=(2, 9, 7)).astype(np.int32)
        payload = encode_motion(motion, cfg)
        back = decode_motion(payload, 9, 7, cfg)
        assert np.array_equal(back, motion)

    def test_out_of_range_motion_rejected(self):
        cfg = CodecConfig(search_range=2)
        with pytest.raises(ValueError, match="search range"):
            encode_motion(np.full((2, 2, 2), 3, dtype=np.int32), cfg)

    def test_shape_validation(self):
        with pytest.raises(ValueError, match="2-D"):
            motion_estimate(np.zeros((8, 8)), np.zeros((8, 16)), CFG)


class TestWarp:
    def test_zero_motion_is_identity(self):
        rng = np.random.default_rng(2)
        ref = rng.random((5, 16, 24)).astype(np.float32)
        out = warp_frame(ref, np.zeros((2, 2, 3), dtype=np.int32), 8)
        assert np.array_equal(out, ref)

    def test_uniform_motion_matches_padded_shift(self):
        rng = np.random.default_rng(3)
        ref = rng.integers(0, 100, size=(2, 16, 16)).astype(np.float64)
        dy, dx = 2, -3
        motion = np.empty((2, 2, 2), dtype=np.int32)
        motion[0], motion[1] = dy, dx
        out = warp_frame(ref, motion, 8)
        pad = 4
        padded = np.pad(ref, ((0, 0), (pad, pad), (pad, pad)), mode="edge")
        want = padded[:, pad + dy:pad + dy + 16, pad + dx:pad + dx + 16]
        assert np.array_equal(out, want)

    def test_per_block_displacement(self):
        ref = np.arange(16 * 16, dtype=np.float64).reshape(1, 16, 16)
        motion = np.zeros((2, 2, 2), dtype=np.int32)
        motion[0, 0, 1] = 1  # top-right block reads one row down
        out = warp_frame(ref, motion, 8)
        assert np.array_equal(out[0, :8, :8], ref[0, :8, :8])
        assert np.array_equal(out[0, :8, 8:], ref[0, 1:9, 8:])
        assert np.array_equal(out[0, 8:, :], ref[0, 8:, :])

    def test_clamping_at_borders(self):
        ref = np.arange(8, dtype=np.float64).reshape(1, 1, 8).repeat(8, axis=1)
        motion = np.full((2, 1, 1), -5, dtype=np.int32)
        out = warp_frame(ref, motion, 8)
        # column index clamps at 0, so first six columns all read column 0
        assert np.array_equal(out[0, 0], np.array([0, 0, 0, 0, 0, 0, 1, 2], dtype=np.float64))


class TestTokens:
    # hand-coded token scripts; ("raw", b) marks an uncompressed escape byte
    FROZEN = [
        ([0] * 64, [EOB]),
        ([5] + [0] * 63, [73, EOB]),
        ([0, 0, 0, -2] + [0] * 60, [3, 68, EOB]),
        ([1] * 64, [65] * 64),
        ([0] * 63 + [7], [63, 77]),
        ([255, -255] + [0] * 62, [573, 574, EOB]),
        ([300] + [0] * 63,
         [ESC, ("raw", 44), ("raw", 1), ("raw", 0), ("raw", 0), EOB]),
        ([-300] + [0] * 63,
         [ESC, ("raw", 212), ("raw", 254), ("raw", 255), ("raw", 255), EOB]),
    ]

    @pytest.mark.parametrize("row,script", FROZEN)
    def test_frozen_symbol_scripts(self, row, script):
        assert tokens_payload([row]) == emit_symbols(script)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 100_000), nblocks=st.integers(1, 6))
    def test_roundtrip_random_rows(self, seed, nblocks):
        rng = np.random.default_rng(seed)
        rows = np.zeros((nblocks, 64), dtype=np.int32)
        mask = rng.random((nblocks, 64)) < 0.2
        rows[mask] = rng.integers(-400, 401, size=int(mask.sum()))
        payload = tokens_payload(rows)
        dec = RangeDecoder(payload)
        back = decode_channel_tokens(dec, AdaptiveModel(TOKEN_ALPHABET), nblocks)
        assert np.array_equal(back, rows)

    def test_escape_values_extreme(self):
        rows = np.zeros((1, 64), dtype=np.int32)
        rows[0, 0] = 2**31 - 1
        rows[0, 5] = -(2**31)
        payload = tokens_payload(rows)
        back = decode_channel_tokens(RangeDecoder(payload),
                                     AdaptiveModel(TOKEN_ALPHABET), 1)
        assert np.array_equal(back, rows)

    def test_run_overflow_rejected(self):
        payload = emit_symbols([64, 65])
        with pytest.raises(BitstreamCorruptError, match="zero run"):
            decode_channel_tokens(RangeDecoder(payload),
                                  AdaptiveModel(TOKEN_ALPHABET), 1)

    def test_eob_after_run_rejected(self):
        payload = emit_symbols([3, EOB])
        with pytest.raises(BitstreamCorruptError, match="end-of-block"):
            decode_channel_tokens(RangeDecoder(payload),
                                  AdaptiveModel(TOKEN_ALPHABET), 1)

    def test_small_escape_rejected(self):
        payload = emit_symbols(
            [ESC, ("raw", 100), ("raw", 0), ("raw", 0), ("raw", 0)])
        with pytest.raises(BitstreamCorruptError, match="inline range"):
            decode_channel_tokens(RangeDecoder(payload),
                                  AdaptiveModel(TOKEN_ALPHABET), 1)

    def test_truncated_payload_reports_offset(self):
        rows = np.zeros((4, 64), dtype=np.int32)
        rows[:, ::3] = 9
        payload = tokens_payload(rows)
        with pytest.raises(BitstreamCorruptError, match="offset"):
            decode_channel_tokens(RangeDecoder(payload[:6]),
                                  AdaptiveModel(TOKEN_ALPHABET), 4)


class TestResidual:
    def test_code_decode_bit_exact(self):
        rng = np.random.default_rng(11)
        resid = (rng.random((3, 16, 24)).astype(np.float32) - 0.5) * 0.3
        step = 8 / 255
        payload, resid_hat = code_residual(resid, step)
        back = decode_residual(payload, step, (3, 16, 24))
        assert back.dtype == np.float32
        assert back.tobytes() == resid_hat.tobytes()

    def test_levels_survive_roundtrip_exactly(self):
        rng = np.random.default_rng(13)
        step = 16 / 255
        levels = rng.integers(-40, 41, size=(3, 16, 16)).astype(np.int32)
        resid = block_idct2(dequantize(levels, step)).astype(np.float32)
        payload, resid_hat = code_residual(resid, step)
        assert resid_hat.tobytes() == resid.tobytes()
        back = decode_residual(payload, step, (3, 16, 16))
        assert back.tobytes() == resid.tobytes()

    def test_finer_steps_cost_more_bits(self):
        rng = np.random.default_rng(17)
        y, x = np.mgrid[0:32, 0:32]
        texture = 0.5 + 0.2 * np.sin(x / 3.0) * np.cos(y / 5.0)
        resid = np.stack([texture] * 3).astype(np.float32)
        resid += rng.normal(0, 0.05, resid.shape).astype(np.float32)
        resid -= resid.mean()
        cfg = CodecConfig()
        sizes = [len(code_residual(resid, s)[0]) for s in cfg.quality_steps]
        assert all(a <= b for a, b in zip(sizes, sizes[1:]))
        assert sizes[0] < sizes[-1]

    def test_zero_residual_is_cheap(self):
        payload, resid_hat = code_residual(np.zeros((3, 32, 32), dtype=np.float32),
                                           8 / 255)
        assert not resid_hat.any()
        assert len(payload) < 32


class TestNets:
    def test_engineered_prediction_is_motion_copy(self):
        nets = build_codec_nets(CFG, seed=0, prediction_noise=0.0)
        rng = np.random.default_rng(4)
        prev = rng.random((3, 16, 16)).astype(np.float32)
        ctx = rng.standard_normal((8, 16, 16)).astype(np.float32)
        pred, fused = predict_frame(nets.deployed(), prev, ctx)
        assert pred.tobytes() == prev.tobytes()
        assert fused.shape == (8, 16, 16)

    def test_noisy_init_stays_close_to_copy(self):
        nets = build_codec_nets(CFG, seed=0)
        rng = np.random.default_rng(4)
        prev = rng.random((3, 16, 16)).astype(np.float32)
        ctx = np.zeros((8, 16, 16), dtype=np.float32)
        pred, _ = predict_frame(nets.deployed(), prev, ctx)
        assert float(np.mean((pred - prev) ** 2)) < 0.05

    def test_context_stays_bounded(self):
        nets = build_codec_nets(CFG, seed=3).deployed()
        rng = np.random.default_rng(9)
        ctx = zero_context(CFG, 16, 16)
        for _ in range(50):
            x = rng.random((3, 16, 16)).astype(np.float32)
            prev = rng.random((3, 16, 16)).astype(np.float32)
            res = code_frame(x, prev, ctx, nets, quality=1)
            ctx = res.context
            assert np.all(np.abs(ctx) <= 1.0)
            assert np.isfinite(ctx).all()

    def test_named_arrays_roundtrip(self):
        nets = build_codec_nets(CFG, seed=5)
        arrays = {k: v.astype(np.float32) for k, v in nets.named_arrays().items()}
        back = nets_from_arrays(arrays, CFG)
        a = nets.deployed()
        b = back.deployed()
        rng = np.random.default_rng(0)
        prev = rng.random((3, 16, 16)).astype(np.float32)
        ctx = rng.random((8, 16, 16)).astype(np.float32)
        pa, _ = predict_frame(a, prev, ctx)
        pb, _ = predict_frame(b, prev, ctx)
        assert np.allclose(pa, pb, atol=2e-7)

    def test_missing_layer_rejected(self):
        nets = build_codec_nets(CFG, seed=5)
        arrays = nets.named_arrays()
        del arrays["codec.fuse1.kernel"]
        with pytest.raises(WeightFormatError, match="fuse1"):
            nets_from_arrays(arrays, CFG)

    def test_channel_mismatch_rejected(self):
        nets = build_codec_nets(CFG, seed=5)
        with pytest.raises(WeightFormatError, match="context channels"):
            nets_from_arrays(nets.named_arrays(), CodecConfig(context_channels=4))


class TestFrameCoding:
    @pytest.mark.parametrize("quality", [0, 1, 2, 3])
    def test_encode_decode_bit_exact(self, quality):
        rng = np.random.default_rng(20 + quality)
        nets = build_codec_nets(CFG, seed=2).deployed()
        prev = rng.random((3, 16, 24)).astype(np.float32)
        ctx = rng.uniform(-0.5, 0.5, (8, 16, 24)).astype(np.float32)
        x = np.clip(prev + rng.normal(0, 0.1, prev.shape), 0, 1).astype(np.float32)
        res = code_frame(x, prev, ctx, nets, quality)
        recon, new_ctx = decode_frame(res.motion_payload, res.latent_payload,
                                      prev, ctx, nets, quality)
        assert recon.tobytes() == res.recon.tobytes()
        assert new_ctx.tobytes() == res.context.tobytes()

    def test_rate_and_distortion_accounting(self):
        rng = np.random.default_rng(30)
        nets = build_codec_nets(CFG, seed=2).deployed()
        prev = rng.random((3, 16, 16)).astype(np.float32)
        x = rng.random((3, 16, 16)).astype(np.float32)
        res = code_frame(x, prev, zero_context(CFG, 16, 16), nets, 1)
        assert res.rate_bits == 8 * (1 + len(res.motion_payload) + len(res.latent_payload))
        assert res.rate_bits == frame_rate_bits(res.motion_payload, res.latent_payload)
        want = float(np.mean((x.astype(np.float64) - res.recon.astype(np.float64)) ** 2))
        assert res.distortion == want
        assert res.recon.min() >= 0.0 and res.recon.max() <= 1.0

    def test_quality_ladder_orders_rate_and_distortion(self):
        rng = np.random.default_rng(31)
        nets = build_codec_nets(CFG, seed=2).deployed()
        y, x_ = np.mgrid[0:32, 0:32]
        base = 0.5 + 0.25 * np.sin(x_ / 4.0) * np.cos(y / 3.0)
        prev = np.stack([base] * 3).astype(np.float32)
        cur = np.clip(prev + rng.normal(0, 0.08, prev.shape), 0, 1).astype(np.float32)
        ctx = zero_context(CFG, 32, 32)
        results = [code_frame(cur, prev, ctx, nets, q) for q in range(4)]
        rates = [r.rate_bits for r in results]
        dists = [r.distortion for r in results]
        assert rates[0] < rates[-1]
        assert all(a <= b for a, b in zip(rates, rates[1:]))
        assert dists[0] > dists[-1]

    def test_shared_motion_candidates_differ_only_in_latent(self):
        rng = np.random.default_rng(32)
        nets = build_codec_nets(CFG, seed=2).deployed()
        prev = rng.random((3, 16, 16)).astype(np.float32)
        x = np.clip(prev + rng.normal(0, 0.05, prev.shape), 0, 1).astype(np.float32)
        motion = motion_estimate(rgb_to_luma(x), rgb_to_luma(prev), CFG)
        payload = encode_motion(motion, CFG)
        ctx_a = zero_context(CFG, 16, 16)
        ctx_b = rng.uniform(-0.3, 0.3, (8, 16, 16)).astype(np.float32)
        ra = code_frame_given_motion(x, prev, ctx_a, motion, payload, nets, 1)
        rb = code_frame_given_motion(x, prev, ctx_b, motion, payload, nets, 1)
        assert ra.motion_payload == rb.motion_payload
        assert ra.latent_payload != rb.latent_payload

    def test_identical_context_gives_identical_code(self):
        rng = np.random.default_rng(33)
        nets = build_codec_nets(CFG, seed=2).deployed()
        prev = rng.random((3, 16, 16)).astype(np.float32)
        x = rng.random((3, 16, 16)).astype(np.float32)
        ctx = rng.uniform(-0.4, 0.4, (8, 16, 16)).astype(np.float32)
        r1 = code_frame(x, prev, ctx, nets, 2)
        r2 = code_frame(x, prev, ctx.copy(), nets, 2)
        assert r1.latent_payload == r2.latent_payload
        assert r1.recon.tobytes() == r2.recon.tobytes()

    def test_bootstrap_from_black(self):
        rng = np.random.default_rng(34)
        nets = build_codec_nets(CFG, seed=2).deployed()
        x = rng.random((3, 16, 16)).astype(np.float32)
        prev = black_frame(16, 16)
        res = code_frame(x, prev, zero_context(CFG, 16, 16), nets, 3)
        assert res.distortion < 0.01
