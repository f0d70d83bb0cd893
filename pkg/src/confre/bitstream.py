"""Container format for coded sequences.

Layout, all little-endian:

    header:  magic "CFRE" | version u8 | width u16 | height u16
             | frame_count u32 | refresh_period u16 | quality u8
             | context_channels u8 | weight_hash u64          (25 bytes)
    record:  flags u8 | motion_len u32 | motion bytes
             | latent_len u32 | latent bytes                   (per frame)

`refresh_period` 0xFFFF means "never refresh after the first frame".
`weight_hash` pins the exact weight bundle the stream was produced with;
decoders refuse streams whose hash does not match their loaded weights.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .errors import BitstreamCorruptError

MAGIC = b"CFRE"
VERSION = 1
HEADER = struct.Struct("<4sBHHIHBBQ")
HEADER_BYTES = HEADER.size  # 25
REFRESH_SENTINEL = 0xFFFF

FLAG_CF = 0x01       # frame was coded against the filtered context
FLAG_RE = 0x02       # display side applies reconstruction enhancement
FLAG_REFRESH = 0x04  # stored context was zeroed before coding this frame
_KNOWN_FLAGS = FLAG_CF | FLAG_RE | FLAG_REFRESH

_MAX_PAYLOAD = 1 << 30  # sanity bound for a single frame payload


@dataclass(frozen=True)
class StreamHeader:
    width: int
    height: int
    frame_count: int
    refresh_period: int | None
    quality: int
    context_channels: int
    weight_hash: int

    def __post_init__(self):
        if not 1 <= self.width <= 0xFFFF or not 1 <= self.height <= 0xFFFF:
            raise ValueError(f"frame size {self.width}x{self.height} out of range")
        if not 1 <= self.frame_count <= 0xFFFFFFFF:
            raise ValueError(f"frame_count {self.frame_count} out of range")
        if self.refresh_period is not None and not 1 <= self.refresh_period < REFRESH_SENTINEL:
            raise ValueError(
                f"refresh_period must be in [1, {REFRESH_SENTINEL - 1}] or None, "
                f"got {self.refresh_period}"
            )
        if not 0 <= self.quality <= 0xFF:
            raise ValueError(f"quality index {self.quality} out of range")
        if not 1 <= self.context_channels <= 0xFF:
            raise ValueError(f"context_channels {self.context_channels} out of range")
        if not 0 <= self.weight_hash < 1 << 64:
            raise ValueError("weight_hash must fit in 64 bits")


@dataclass(frozen=True)
class FrameRecord:
    flags: int
    motion: bytes
    latent: bytes

    def __post_init__(self):
        if self.flags & ~_KNOWN_FLAGS:
            raise ValueError(f"unknown flag bits 0x{self.flags:02x}")

    @property
    def rate_bits(self) -> int:
        # flags byte plus both payloads; the two length words are framing
        return 8 * (1 + len(self.motion) + len(self.latent))

    @property
    def f_cf(self) -> bool:
        return bool(self.flags & FLAG_CF)

    @property
    def f_re(self) -> bool:
        return bool(self.flags & FLAG_RE)

    @property
    def refresh(self) -> bool:
        return bool(self.flags & FLAG_REFRESH)


def serialize_stream(header: StreamHeader, records: list[FrameRecord]) -> bytes:
    if len(records) != header.frame_count:
        raise ValueError(
            f"header says {header.frame_count} frames, got {len(records)} records"
        )
    crp = REFRESH_SENTINEL if header.refresh_period is None else header.refresh_period
    parts = [HEADER.pack(MAGIC, VERSION, header.width, header.height,
                         header.frame_count, crp, header.quality,
                         header.context_channels, header.weight_hash)]
    for rec in records:
        parts.append(struct.pack("<BI", rec.flags, len(rec.motion)))
        parts.append(rec.motion)
        parts.append(struct.pack("<I", len(rec.latent)))
        parts.append(rec.latent)
    return b"".join(parts)


def parse_stream(blob: bytes) -> tuple[StreamHeader, list[FrameRecord]]:
    if len(blob) < HEADER_BYTES:
        raise BitstreamCorruptError(
            f"stream truncated in header: {len(blob)} bytes at offset 0"
        )
    magic, version, width, height, count, crp, quality, channels, whash = \
        HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise BitstreamCorruptError(f"bad magic {magic!r} at offset 0")
    if version != VERSION:
        raise BitstreamCorruptError(f"unsupported version {version} at offset 4")
    try:
        header = StreamHeader(
            width=width, height=height, frame_count=count,
            refresh_period=None if crp == REFRESH_SENTINEL else crp,
            quality=quality, context_channels=channels, weight_hash=whash,
        )
    except ValueError as exc:
        raise BitstreamCorruptError(f"invalid header: {exc}") from exc

    pos = HEADER_BYTES
    records = []
    for i in range(count):
        if pos + 5 > len(blob):
            raise BitstreamCorruptError(
                f"stream truncated in record {i} at offset {pos}"
            )
        flags, motion_len = struct.unpack_from("<BI", blob, pos)
        if flags & ~_KNOWN_FLAGS:
            raise BitstreamCorruptError(
                f"unknown flag bits 0x{flags:02x} in record {i} at offset {pos}"
            )
        pos += 5
        if motion_len > _MAX_PAYLOAD or pos + motion_len + 4 > len(blob):
            raise BitstreamCorruptError(
                f"motion payload of record {i} overruns the stream at offset {pos}"
            )
        motion = blob[pos:pos + motion_len]
        pos += motion_len
        (latent_len,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        if latent_len > _MAX_PAYLOAD or pos + latent_len > len(blob):
            raise BitstreamCorruptError(
                f"latent payload of record {i} overruns the stream at offset {pos}"
            )
        latent = blob[pos:pos + latent_len]
        pos += latent_len
        records.append(FrameRecord(flags=flags, motion=motion, latent=latent))
    if pos != len(blob):
        raise BitstreamCorruptError(
            f"{len(blob) - pos} trailing bytes after the last record at offset {pos}"
        )
    return header, records


def write_stream(path, header: StreamHeader, records: list[FrameRecord]) -> int:
    blob = serialize_stream(header, records)
    with open(path, "wb") as fh:
        fh.write(blob)
    return len(blob)


def read_stream(path) -> tuple[StreamHeader, list[FrameRecord]]:
    with open(path, "rb") as fh:
        return parse_stream(fh.read())


def stream_size_bytes(records: list[FrameRecord]) -> int:
    return HEADER_BYTES + sum(9 + len(r.motion) + len(r.latent) for r in records)
