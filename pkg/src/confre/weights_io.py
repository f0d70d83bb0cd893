"""Named-array weight container.

Layout (little-endian throughout):

    magic   4 bytes  b"CFWT"
    version u8       1
    count   u16      number of arrays
    then per array, in sorted name order:
        name_len u8, name bytes (utf-8)
        rank     u8, dims u32 * rank
        payload  float32 * prod(dims)

Sorting makes the byte stream a pure function of the array dict, so the
64-bit content hash embedded in bitstreams can be computed from either
the file or the in-memory arrays.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

from .errors import WeightFormatError

MAGIC = b"CFWT"
VERSION = 1
MAX_RANK = 8

__all__ = [
    "MAGIC",
    "VERSION",
    "serialize_arrays",
    "write_weight_file",
    "read_weight_file",
    "weight_hash",
]


def serialize_arrays(arrays: dict) -> bytes:
    if len(arrays) > 0xFFFF:
        raise ValueError(f"too many arrays: {len(arrays)}")
    out = bytearray()
    out += MAGIC
    out += struct.pack("<BH", VERSION, len(arrays))
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name], dtype=np.float32)
        encoded = name.encode("utf-8")
        if not 1 <= len(encoded) <= 255:
            raise ValueError(f"array name length must be 1..255 bytes: {name!r}")
        if arr.ndim > MAX_RANK:
            raise ValueError(f"array {name!r} has rank {arr.ndim} > {MAX_RANK}")
        out += struct.pack("<B", len(encoded))
        out += encoded
        out += struct.pack("<B", arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.tobytes()
    return bytes(out)


def write_weight_file(path, arrays: dict):
    with open(path, "wb") as fh:
        fh.write(serialize_arrays(arrays))


def _need(blob, offset, n, what):
    if offset + n > len(blob):
        raise WeightFormatError(
            f"truncated weight data: needed {n} bytes for {what} at offset {offset}, "
            f"have {len(blob) - offset}"
        )


def read_weight_file(path) -> dict:
    with open(path, "rb") as fh:
        blob = fh.read()
    return parse_arrays(blob)


def parse_arrays(blob: bytes) -> dict:
    _need(blob, 0, 4, "magic")
    if blob[:4] != MAGIC:
        raise WeightFormatError(f"bad magic {blob[:4]!r} at offset 0, expected {MAGIC!r}")
    _need(blob, 4, 3, "version/count")
    version, count = struct.unpack_from("<BH", blob, 4)
    if version != VERSION:
        raise WeightFormatError(f"unsupported version {version} at offset 4")
    pos = 7
    arrays = {}
    for _ in range(count):
        _need(blob, pos, 1, "name length")
        (name_len,) = struct.unpack_from("<B", blob, pos)
        pos += 1
        if name_len == 0:
            raise WeightFormatError(f"zero-length array name at offset {pos - 1}")
        _need(blob, pos, name_len, "name")
        name = blob[pos : pos + name_len].decode("utf-8")
        pos += name_len
        _need(blob, pos, 1, "rank")
        (rank,) = struct.unpack_from("<B", blob, pos)
        pos += 1
        if rank > MAX_RANK:
            raise WeightFormatError(f"array {name!r}: rank {rank} at offset {pos - 1}")
        _need(blob, pos, 4 * rank, "dims")
        dims = struct.unpack_from(f"<{rank}I", blob, pos)
        pos += 4 * rank
        n_vals = 1
        for d in dims:
            n_vals *= d
        nbytes = 4 * n_vals
        _need(blob, pos, nbytes, f"payload of {name!r}")
        arr = np.frombuffer(blob, dtype="<f4", count=n_vals, offset=pos).reshape(dims)
        pos += nbytes
        if name in arrays:
            raise WeightFormatError(f"duplicate array name {name!r} at offset {pos}")
        arrays[name] = arr.copy()
    if pos != len(blob):
        raise WeightFormatError(
            f"{len(blob) - pos} trailing bytes after last array at offset {pos}"
        )
    return arrays


def weight_hash(arrays: dict) -> int:
    """64-bit content hash, pinned into bitstream headers to forbid silent drift."""
    digest = hashlib.sha256(serialize_arrays(arrays)).digest()
    return int.from_bytes(digest[:8], "little")
