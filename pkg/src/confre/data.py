"""Synthetic clips and frame file I/O.

Clips are float32 (frames, 3, h, w) arrays in [0, 1], generated by
sampling a smooth random texture canvas along a deterministic camera
path (translation or rotation) with optional per-frame sensor noise, so
consecutive frames are genuinely motion-related and worth inter-coding.

On disk a clip is either a directory of numbered PNGs or a raw planar
RGB24 blob with a small `.dims` sidecar.
"""

from __future__ import annotations

import os
import re

import numpy as np

from .errors import BadInputError

CLIP_KINDS = ("pan", "spin", "static")


def _smooth_canvas(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """Random texture with energy at several scales, values in [0.05, 0.95]."""
    canvas = np.zeros((3, h, w))
    for scale in (4, 8, 16):
        coarse = rng.standard_normal((3, h // scale + 2, w // scale + 2))
        up = np.kron(coarse, np.ones((scale, scale)))[:, :h, :w]
        canvas += up / scale * 4.0
    canvas += rng.standard_normal((3, h, w)) * 0.15
    lo, hi = canvas.min(), canvas.max()
    return 0.05 + 0.9 * (canvas - lo) / (hi - lo)


def _bilinear(canvas: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Sample (3, H, W) canvas at float coordinate grids (h, w)."""
    _, ch, cw = canvas.shape
    ys = np.clip(ys, 0.0, ch - 1.001)
    xs = np.clip(xs, 0.0, cw - 1.001)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    wy = ys - y0
    wx = xs - x0
    top = canvas[:, y0, x0] * (1 - wx) + canvas[:, y0, x0 + 1] * wx
    bottom = canvas[:, y0 + 1, x0] * (1 - wx) + canvas[:, y0 + 1, x0 + 1] * wx
    return top * (1 - wy) + bottom * wy


def make_clip(kind: str, frames: int, height: int, width: int, seed: int,
              noise: float = 0.01) -> np.ndarray:
    """Deterministic synthetic clip; same arguments, same pixels."""
    if kind not in CLIP_KINDS:
        raise BadInputError(f"unknown clip kind {kind!r}, pick one of {CLIP_KINDS}")
    if frames < 1 or height < 8 or width < 8:
        raise BadInputError(
            f"clip needs frames >= 1 and dims >= 8, got {frames}x{height}x{width}"
        )
    rng = np.random.default_rng(seed)
    margin = max(height, width)  # room for the camera path
    canvas = _smooth_canvas(rng, height + 2 * margin, width + 2 * margin)
    gy, gx = np.mgrid[0:height, 0:width].astype(np.float64)
    cy = margin + height / 2.0
    cx = margin + width / 2.0

    if kind == "pan":
        vy, vx = rng.uniform(-1.5, 1.5, size=2)
        if abs(vy) + abs(vx) < 0.4:
            vy, vx = 0.7, -0.5
    elif kind == "spin":
        omega = rng.uniform(0.004, 0.012) * rng.choice([-1.0, 1.0])
    out = np.empty((frames, 3, height, width), dtype=np.float32)
    for t in range(frames):
        if kind == "pan":
            ys = gy + margin + vy * t
            xs = gx + margin + vx * t
        elif kind == "spin":
            ang = omega * t
            ry = gy + margin - cy
            rx = gx + margin - cx
            ys = cy + np.cos(ang) * ry - np.sin(ang) * rx
            xs = cx + np.sin(ang) * ry + np.cos(ang) * rx
        else:  # static
            ys = gy + margin
            xs = gx + margin
        frame = _bilinear(canvas, ys, xs)
        if noise > 0:
            frame = frame + rng.normal(0.0, noise, frame.shape)
        out[t] = np.clip(frame, 0.0, 1.0)
    return out


def training_clips(count: int, frames: int, height: int, width: int,
                   base_seed: int = 1000) -> list[np.ndarray]:
    kinds = ["pan", "spin"]
    return [
        make_clip(kinds[i % len(kinds)], frames, height, width, base_seed + i)
        for i in range(count)
    ]


def heldout_clips(count: int, frames: int, height: int, width: int,
                  base_seed: int = 9000) -> list[np.ndarray]:
    """Evaluation clips; seed range disjoint from `training_clips`."""
    kinds = ["pan", "spin"]
    return [
        make_clip(kinds[i % len(kinds)], frames, height, width, base_seed + i)
        for i in range(count)
    ]


def frames_to_u8(frames: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(frames, dtype=np.float64) * 255.0),
                   0, 255).astype(np.uint8)


def frames_from_u8(data: np.ndarray) -> np.ndarray:
    return (data.astype(np.float32) / 255.0)


def save_raw(path, frames: np.ndarray) -> None:
    """Planar RGB24 blob plus a `<path>.dims` sidecar of 'frames height width'."""
    u8 = frames_to_u8(frames)
    t, c, h, w = u8.shape
    if c != 3:
        raise BadInputError(f"expected 3 channels, got {c}")
    with open(path, "wb") as fh:
        fh.write(u8.tobytes())
    with open(f"{path}.dims", "w") as fh:
        fh.write(f"{t} {h} {w}\n")


def load_raw(path) -> np.ndarray:
    dims_path = f"{path}.dims"
    if not os.path.exists(dims_path):
        raise BadInputError(f"missing sidecar {dims_path}")
    with open(dims_path) as fh:
        parts = fh.read().split()
    if len(parts) != 3:
        raise BadInputError(f"sidecar {dims_path} must hold 'frames height width'")
    t, h, w = (int(p) for p in parts)
    expected = t * 3 * h * w
    blob = np.fromfile(path, dtype=np.uint8)
    if blob.size != expected:
        raise BadInputError(
            f"{path} holds {blob.size} bytes, expected {expected} for {t}x3x{h}x{w}"
        )
    return frames_from_u8(blob.reshape(t, 3, h, w))


_PNG_INDEX = re.compile(r"(\d+)")


def save_png_dir(directory, frames: np.ndarray) -> None:
    from PIL import Image

    os.makedirs(directory, exist_ok=True)
    u8 = frames_to_u8(frames)
    for i, frame in enumerate(u8):
        Image.fromarray(frame.transpose(1, 2, 0), mode="RGB").save(
            os.path.join(directory, f"frame_{i:05d}.png")
        )


def load_png_dir(directory) -> np.ndarray:
    from PIL import Image

    names = [n for n in os.listdir(directory) if n.lower().endswith(".png")]
    if not names:
        raise BadInputError(f"no .png files in {directory}")

    def index_of(name):
        m = _PNG_INDEX.findall(name)
        if not m:
            raise BadInputError(f"cannot order {name!r}: no frame number in the name")
        return int(m[-1])

    names.sort(key=index_of)
    frames = []
    shape = None
    for name in names:
        img = Image.open(os.path.join(directory, name)).convert("RGB")
        arr = np.asarray(img, dtype=np.uint8).transpose(2, 0, 1)
        if shape is None:
            shape = arr.shape
        elif arr.shape != shape:
            raise BadInputError(
                f"{name} has shape {arr.shape}, earlier frames had {shape}"
            )
        frames.append(arr)
    return frames_from_u8(np.stack(frames))


def load_frames(path) -> np.ndarray:
    """Dispatch on path type: directory of PNGs or raw blob with sidecar."""
    if os.path.isdir(path):
        return load_png_dir(path)
    if os.path.exists(path):
        return load_raw(path)
    raise BadInputError(f"no such input: {path}")
