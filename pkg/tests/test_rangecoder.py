import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from confre.rangecoder import (
    AdaptiveModel,
    DecodeError,
    RangeDecoder,
    RangeEncoder,
    decode_symbols,
    encode_symbols,
    measure_bits,
)

FLUSH_BYTES = 5  # leading byte + 4 tail bytes written by finish()


def roundtrip(symbols, alphabet):
    payload = encode_symbols(symbols, AdaptiveModel(alphabet))
    got = decode_symbols(payload, len(symbols), AdaptiveModel(alphabet))
    return payload, got


class TestRoundTrip:
    def test_empty_stream_is_just_flush(self):
        payload, got = roundtrip([], 256)
        assert got == []
        assert len(payload) <= 8

    def test_ten_thousand_random_symbols(self):
        rng = np.random.default_rng(7)
        syms = rng.integers(0, 700, size=10_000).tolist()
        _, got = roundtrip(syms, 700)
        assert got == syms

    @settings(max_examples=120, deadline=None)
    @given(
        alphabet=st.integers(2, 1024),
        seed=st.integers(0, 2**31),
        n=st.integers(0, 400),
        skew=st.floats(0.0, 6.0),
    )
    def test_random_streams_roundtrip(self, alphabet, seed, n, skew):
        rng = np.random.default_rng(seed)
        # skewed draws stress both the adaptive counts and the carry logic
        raw = rng.random(n) ** (1.0 + skew)
        syms = np.minimum((raw * alphabet).astype(int), alphabet - 1).tolist()
        _, got = roundtrip(syms, alphabet)
        assert got == syms

    def test_interleaved_models_share_one_stream(self):
        rng = np.random.default_rng(11)
        a = rng.integers(0, 17, size=500).tolist()
        b = rng.integers(0, 576, size=500).tolist()
        enc = RangeEncoder()
        ma, mb = AdaptiveModel(17), AdaptiveModel(576)
        for x, y in zip(a, b):
            encode_symbols([x], ma, enc)
            encode_symbols([y], mb, enc)
        payload = enc.finish()

        dec = RangeDecoder(payload)
        ma2, mb2 = AdaptiveModel(17), AdaptiveModel(576)
        got_a, got_b = [], []
        for _ in range(500):
            got_a += decode_symbols(dec, 1, ma2)
            got_b += decode_symbols(dec, 1, mb2)
        assert got_a == a and got_b == b

    def test_raw_bytes_roundtrip(self):
        enc = RangeEncoder()
        data = bytes(range(256)) * 3
        for b in data:
            enc.encode_raw_byte(b)
        payload = enc.finish()
        dec = RangeDecoder(payload)
        assert bytes(dec.decode_raw_byte() for _ in range(len(data))) == data


class TestCompression:
    def test_uniform_iid_within_two_percent_of_shannon(self):
        n = 65_536
        rng = np.random.default_rng(3)
        syms = rng.integers(0, 256, size=n).tolist()
        payload = encode_symbols(syms, AdaptiveModel(256))
        shannon_bytes = n  # 8 bits/symbol
        assert len(payload) <= shannon_bytes * 1.02
        # sanity: cannot beat the entropy by a meaningful margin either
        assert len(payload) >= shannon_bytes * 0.98

    def test_constant_symbol_costs_under_tenth_bit_each(self):
        n = 10_000
        payload = encode_symbols([4] * n, AdaptiveModel(256))
        bits = measure_bits(payload) - 8 * FLUSH_BYTES
        assert bits / n <= 0.1

    def test_skewed_source_beats_flat_coding(self):
        rng = np.random.default_rng(5)
        syms = np.minimum(rng.geometric(0.5, size=8000) - 1, 31).tolist()
        payload = encode_symbols(syms, AdaptiveModel(32))
        flat_bits = 8000 * 5  # log2(32) per symbol
        assert measure_bits(payload) < 0.6 * flat_bits


class TestAdaptiveModel:
    def test_lookup_matches_prefix_sums(self):
        m = AdaptiveModel(10)
        rng = np.random.default_rng(0)
        for s in rng.integers(0, 10, size=200):
            m.update(int(s))
        freqs = list(m.snapshot())
        for s in range(10):
            cum, freq = m.lookup(s)
            assert cum == sum(freqs[:s])
            assert freq == freqs[s]
        assert m.total == sum(freqs)

    def test_locate_inverts_lookup(self):
        m = AdaptiveModel(37)
        rng = np.random.default_rng(1)
        for s in rng.integers(0, 37, size=300):
            m.update(int(s))
        for s in range(37):
            cum, freq = m.lookup(s)
            for v in (cum, cum + freq - 1):
                sym, c, f = m.locate(v)
                assert (sym, c, f) == (s, cum, freq)

    def test_rescale_keeps_every_frequency_positive(self):
        m = AdaptiveModel(4, increment=4096, cap=1 << 14)
        for _ in range(64):
            m.update(2)
        assert all(f >= 1 for f in m.snapshot())
        assert m.total <= 1 << 14

    def test_state_equal_after_identical_prefixes(self):
        a, b = AdaptiveModel(64), AdaptiveModel(64)
        seq = np.random.default_rng(9).integers(0, 64, size=500)
        for s in seq:
            a.update(int(s))
            b.update(int(s))
        assert a.snapshot() == b.snapshot()
        assert a.total == b.total

    def test_out_of_alphabet_symbol_rejected(self):
        with pytest.raises(ValueError, match="alphabet"):
            encode_symbols([5], AdaptiveModel(5))

    def test_tiny_alphabet_rejected(self):
        with pytest.raises(ValueError, match="alphabet"):
            AdaptiveModel(1)


class TestErrors:
    def test_truncated_payload_raises_with_offset(self):
        syms = list(range(256)) * 8
        payload = encode_symbols(syms, AdaptiveModel(256))
        cut = payload[: len(payload) // 2]
        with pytest.raises(DecodeError, match="offset"):
            decode_symbols(cut, len(syms), AdaptiveModel(256))

    def test_bad_interval_rejected(self):
        enc = RangeEncoder()
        with pytest.raises(ValueError, match="interval"):
            enc.encode(10, 0, 8)

    def test_double_finish_rejected(self):
        enc = RangeEncoder()
        enc.finish()
        with pytest.raises(RuntimeError):
            enc.finish()

    def test_measure_bits(self):
        assert measure_bits(b"") == 0
        assert measure_bits(b"abc") == 24
