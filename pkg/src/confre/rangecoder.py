"""Byte-oriented adaptive range coder.

Carry handling follows the widely deployed cache/pending-0xFF scheme: the
encoder keeps a 32-bit window `low` plus one cached byte and a count of
pending 0xFF bytes; a carry out of the window increments the cached byte
and flips the pending run to 0x00s.  The decoder primes a 32-bit `code`
register from the first five output bytes (the first byte is the
leading zero/carry byte) and renormalizes byte-by-byte in lockstep with
the encoder, so round trips are exact for any symbol/frequency sequence.

Frequencies come from `AdaptiveModel`, a Fenwick tree over per-symbol
counts: +`increment` after each coded symbol, halved (floors kept >= 1)
whenever the total would exceed the cap.  Encoder and decoder must drive
identical update sequences; models are cheap, so the codec layer simply
builds fresh ones per frame payload.
"""

from __future__ import annotations

from .errors import BitstreamCorruptError

MASK32 = 0xFFFFFFFF
TOP = 1 << 24

__all__ = [
    "RangeEncoder",
    "RangeDecoder",
    "AdaptiveModel",
    "DecodeError",
    "encode_symbols",
    "decode_symbols",
    "measure_bits",
]


class DecodeError(BitstreamCorruptError):
    """Entropy payload failed to decode; message carries the byte offset."""


class RangeEncoder:
    def __init__(self):
        self._low = 0  # may exceed 32 bits until the carry is resolved
        self._range = MASK32
        self._cache = 0
        self._cache_size = 1  # includes the leading zero byte
        self._out = bytearray()
        self._finished = False

    def _shift_low(self):
        low = self._low
        if low < 0xFF000000 or low > MASK32:
            carry = low >> 32
            self._out.append((self._cache + carry) & 0xFF)
            if self._cache_size > 1:
                filler = (0xFF + carry) & 0xFF
                self._out.extend([filler] * (self._cache_size - 1))
            self._cache = (low >> 24) & 0xFF
            self._cache_size = 0
        self._cache_size += 1
        self._low = (low << 8) & MASK32

    def encode(self, cum, freq, total):
        """Narrows the interval to [cum, cum+freq) / total."""
        if freq <= 0 or cum < 0 or cum + freq > total:
            raise ValueError(f"bad coding interval: cum={cum} freq={freq} total={total}")
        r = self._range // total
        self._low += r * cum
        self._range = r * freq
        while self._range < TOP:
            self._range = (self._range << 8) & MASK32
            self._shift_low()

    def encode_raw_byte(self, value):
        """Uniform byte, used for escape payloads."""
        self.encode(value & 0xFF, 1, 256)

    def finish(self) -> bytes:
        if self._finished:
            raise RuntimeError("finish() called twice")
        self._finished = True
        for _ in range(5):
            self._shift_low()
        return bytes(self._out)


class RangeDecoder:
    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0
        self._range = MASK32
        self._code = 0
        for _ in range(5):
            self._code = ((self._code << 8) | self._read_byte()) & MASK32

    def _read_byte(self):
        if self._pos >= len(self._data):
            raise DecodeError(
                f"entropy payload truncated: needed byte at offset {self._pos}, "
                f"payload is {len(self._data)} bytes"
            )
        b = self._data[self._pos]
        self._pos += 1
        return b

    def decode_freq(self, total):
        """Scales the code into [0, total); caller then finds the symbol."""
        self._range //= total
        v = self._code // self._range
        return v if v < total else total - 1

    def consume(self, cum, freq):
        self._code -= cum * self._range
        self._range *= freq
        while self._range < TOP:
            self._code = ((self._code << 8) | self._read_byte()) & MASK32
            self._range = (self._range << 8) & MASK32

    def decode_raw_byte(self):
        v = self.decode_freq(256)
        self.consume(v, 1)
        return v


class AdaptiveModel:
    """Adaptive per-symbol frequencies in a Fenwick tree (O(log K) ops)."""

    def __init__(self, alphabet_size, increment=32, cap=1 << 16):
        if alphabet_size < 2:
            raise ValueError(f"alphabet size must be >= 2, got {alphabet_size}")
        if 2 * alphabet_size > cap:
            raise ValueError(
                f"alphabet size {alphabet_size} too large for frequency cap {cap}"
            )
        self.size = alphabet_size
        self.increment = increment
        self.cap = cap
        self._freq = [1] * alphabet_size
        self.total = alphabet_size
        self._rebuild()

    def _rebuild(self):
        n = self.size
        tree = [0] * (n + 1)
        tree[1 : n + 1] = self._freq
        for i in range(1, n + 1):
            j = i + (i & -i)
            if j <= n:
                tree[j] += tree[i]
        self._tree = tree
        # highest power of two <= n, for locate()
        self._topbit = 1 << (n.bit_length() - 1)

    def lookup(self, symbol):
        """(cum, freq) for an exact symbol."""
        if not 0 <= symbol < self.size:
            raise ValueError(f"symbol {symbol} outside alphabet of size {self.size}")
        tree = self._tree
        cum = 0
        i = symbol
        while i:
            cum += tree[i]
            i &= i - 1
        return cum, self._freq[symbol]

    def locate(self, value):
        """(symbol, cum, freq) with cum <= value < cum + freq."""
        if not 0 <= value < self.total:
            raise DecodeError(f"scaled code value {value} outside total {self.total}")
        tree = self._tree
        pos = 0
        rem = value
        bit = self._topbit
        n = self.size
        while bit:
            nxt = pos + bit
            if nxt <= n and tree[nxt] <= rem:
                rem -= tree[nxt]
                pos = nxt
            bit >>= 1
        return pos, value - rem, self._freq[pos]

    def update(self, symbol):
        inc = self.increment
        self._freq[symbol] += inc
        self.total += inc
        i = symbol + 1
        tree = self._tree
        n = self.size
        while i <= n:
            tree[i] += inc
            i += i & -i
        if self.total > self.cap:
            self._freq = [(f + 1) >> 1 for f in self._freq]
            self.total = sum(self._freq)
            self._rebuild()

    def snapshot(self):
        """Frequency table copy, for encoder/decoder sync checks."""
        return tuple(self._freq)


def encode_symbols(symbols, model, encoder=None):
    """Codes a symbol iterable through one adaptive model.

    With `encoder=None` a fresh coder is used and the finished payload is
    returned; pass an explicit encoder to interleave several models into
    one stream (caller finishes it).
    """
    own = encoder is None
    enc = RangeEncoder() if own else encoder
    for s in symbols:
        s = int(s)
        cum, freq = model.lookup(s)
        enc.encode(cum, freq, model.total)
        model.update(s)
    return enc.finish() if own else None


def decode_symbols(source, count, model):
    """Decodes `count` symbols; `source` is a payload or an open decoder."""
    dec = RangeDecoder(source) if isinstance(source, (bytes, bytearray)) else source
    out = []
    append = out.append
    for _ in range(count):
        v = dec.decode_freq(model.total)
        sym, cum, freq = model.locate(v)
        dec.consume(cum, freq)
        model.update(sym)
        append(sym)
    return out


def measure_bits(payload: bytes) -> int:
    return 8 * len(payload)
