"""Orthonormal 8x8 block cosine transform and scalar quantization.

All transform math stays in float64 so energy checks hold to near machine
precision; quantized levels are int32.
"""

from __future__ import annotations

import numpy as np

BLOCK = 8


def _basis() -> np.ndarray:
    n = np.arange(BLOCK)
    k = n[:, None]
    mat = np.cos(np.pi * (2.0 * n[None, :] + 1.0) * k / (2.0 * BLOCK))
    mat *= np.sqrt(2.0 / BLOCK)
    mat[0] *= np.sqrt(0.5)
    return mat


DCT_BASIS = _basis()
DCT_BASIS.setflags(write=False)


def _zigzag() -> np.ndarray:
    order = []
    for s in range(2 * BLOCK - 1):
        diag = [(i, s - i) for i in range(BLOCK) if 0 <= s - i < BLOCK]
        if s % 2 == 0:
            diag.reverse()
        order.extend(i * BLOCK + j for i, j in diag)
    return np.asarray(order, dtype=np.int64)


ZIGZAG = _zigzag()
ZIGZAG.setflags(write=False)
# inverse permutation: UNZIGZAG[ZIGZAG[i]] = i
UNZIGZAG = np.argsort(ZIGZAG)
UNZIGZAG.setflags(write=False)


def _check_blocked(x: np.ndarray) -> None:
    if x.ndim != 3:
        raise ValueError(f"expected (channels, height, width), got shape {x.shape}")
    if x.shape[1] % BLOCK or x.shape[2] % BLOCK:
        raise ValueError(
            f"spatial dims must be multiples of {BLOCK}, got {x.shape[1]}x{x.shape[2]}"
        )


def block_dct2(x: np.ndarray) -> np.ndarray:
    """Per-channel blockwise 2D transform of a (c, h, w) array."""
    _check_blocked(x)
    c, h, w = x.shape
    xb = np.asarray(x, dtype=np.float64).reshape(c, h // BLOCK, BLOCK, w // BLOCK, BLOCK)
    yb = np.einsum("um,cimjn,vn->ciujv", DCT_BASIS, xb, DCT_BASIS, optimize=True)
    return yb.reshape(c, h, w)


def block_idct2(y: np.ndarray) -> np.ndarray:
    _check_blocked(y)
    c, h, w = y.shape
    yb = np.asarray(y, dtype=np.float64).reshape(c, h // BLOCK, BLOCK, w // BLOCK, BLOCK)
    xb = np.einsum("um,ciujv,vn->cimjn", DCT_BASIS, yb, DCT_BASIS, optimize=True)
    return xb.reshape(c, h, w)


def pad_to_block(x: np.ndarray, multiple: int = BLOCK) -> tuple[np.ndarray, int, int]:
    """Edge-pad the last two axes up to a multiple; returns (padded, h, w)."""
    h, w = x.shape[-2], x.shape[-1]
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph == 0 and pw == 0:
        return x, h, w
    pad = [(0, 0)] * (x.ndim - 2) + [(0, ph), (0, pw)]
    return np.pad(x, pad, mode="edge"), h, w


def crop_to(x: np.ndarray, h: int, w: int) -> np.ndarray:
    return x[..., :h, :w]


def zigzag_blocks(y: np.ndarray) -> np.ndarray:
    """(c, h, w) coefficients -> (c, nblocks, 64) scan-ordered rows."""
    _check_blocked(y)
    c, h, w = y.shape
    yb = y.reshape(c, h // BLOCK, BLOCK, w // BLOCK, BLOCK)
    flat = yb.transpose(0, 1, 3, 2, 4).reshape(c, -1, BLOCK * BLOCK)
    return flat[:, :, ZIGZAG]


def unzigzag_blocks(rows: np.ndarray, h: int, w: int) -> np.ndarray:
    """Inverse of zigzag_blocks for spatial size (h, w)."""
    c, nblocks, width = rows.shape
    if width != BLOCK * BLOCK:
        raise ValueError(f"rows must have {BLOCK * BLOCK} entries, got {width}")
    if nblocks != (h // BLOCK) * (w // BLOCK) or h % BLOCK or w % BLOCK:
        raise ValueError(f"block count {nblocks} does not tile {h}x{w}")
    flat = rows[:, :, UNZIGZAG]
    yb = flat.reshape(c, h // BLOCK, w // BLOCK, BLOCK, BLOCK)
    return yb.transpose(0, 1, 3, 2, 4).reshape(c, h, w)


def quantize(coef: np.ndarray, step: float) -> np.ndarray:
    if step <= 0:
        raise ValueError(f"quantizer step must be positive, got {step}")
    return np.rint(coef / step).astype(np.int32)


def dequantize(levels: np.ndarray, step: float) -> np.ndarray:
    if step <= 0:
        raise ValueError(f"quantizer step must be positive, got {step}")
    return levels.astype(np.float64) * step
