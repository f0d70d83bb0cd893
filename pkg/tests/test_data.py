import numpy as np
import pytest

from confre.data import (
    frames_from_u8,
    frames_to_u8,
    heldout_clips,
    load_frames,
    load_png_dir,
    load_raw,
    make_clip,
    save_png_dir,
    save_raw,
    training_clips,
)
from confre.errors import BadInputError


class TestClips:
    def test_shape_dtype_range(self):
        clip = make_clip("pan", 6, 32, 48, seed=1)
        assert clip.shape == (6, 3, 32, 48)
        assert clip.dtype == np.float32
        assert clip.min() >= 0.0 and clip.max() <= 1.0

    def test_deterministic(self):
        a = make_clip("spin", 4, 32, 32, seed=7)
        b = make_clip("spin", 4, 32, 32, seed=7)
        assert a.tobytes() == b.tobytes()
        c = make_clip("spin", 4, 32, 32, seed=8)
        assert a.tobytes() != c.tobytes()

    def test_pan_moves_and_static_does_not(self):
        pan = make_clip("pan", 8, 32, 32, seed=3, noise=0.0)
        static = make_clip("static", 8, 32, 32, seed=3, noise=0.0)
        assert float(np.abs(pan[7] - pan[0]).mean()) > 0.01
        assert np.array_equal(static[7], static[0])

    def test_frames_have_texture(self):
        clip = make_clip("pan", 2, 64, 64, seed=11, noise=0.0)
        assert float(clip[0].std()) > 0.05

    def test_consecutive_frames_are_correlated(self):
        clip = make_clip("pan", 4, 32, 32, seed=5, noise=0.0)
        shuffled = make_clip("pan", 1, 32, 32, seed=99, noise=0.0)
        near = float(np.mean((clip[1] - clip[0]) ** 2))
        far = float(np.mean((shuffled[0] - clip[0]) ** 2))
        assert near < far

    def test_bad_args_rejected(self):
        with pytest.raises(BadInputError, match="kind"):
            make_clip("zoom", 4, 32, 32, seed=0)
        with pytest.raises(BadInputError, match="dims"):
            make_clip("pan", 4, 4, 32, seed=0)

    def test_train_and_heldout_seeds_disjoint(self):
        train = training_clips(2, 3, 16, 16)
        held = heldout_clips(2, 3, 16, 16)
        for a in train:
            for b in held:
                assert a.tobytes() != b.tobytes()


class TestU8:
    def test_roundtrip_on_lattice(self):
        rng = np.random.default_rng(0)
        u8 = rng.integers(0, 256, size=(2, 3, 8, 8)).astype(np.uint8)
        back = frames_to_u8(frames_from_u8(u8))
        assert np.array_equal(back, u8)

    def test_rounding(self):
        f = np.array([[[[0.0, 1.0, 0.5, 0.2501]]]], dtype=np.float32)
        assert frames_to_u8(f).ravel().tolist() == [0, 255, 128, 64]


class TestRawIO:
    def test_roundtrip(self, tmp_path):
        clip = make_clip("pan", 3, 16, 24, seed=2)
        path = tmp_path / "clip.rgb"
        save_raw(path, clip)
        back = load_raw(path)
        assert back.shape == clip.shape
        assert np.array_equal(frames_to_u8(back), frames_to_u8(clip))

    def test_missing_sidecar(self, tmp_path):
        path = tmp_path / "clip.rgb"
        path.write_bytes(b"\x00" * 48)
        with pytest.raises(BadInputError, match="sidecar"):
            load_raw(path)

    def test_size_mismatch(self, tmp_path):
        path = tmp_path / "clip.rgb"
        path.write_bytes(b"\x00" * 10)
        (tmp_path / "clip.rgb.dims").write_text("1 4 4\n")
        with pytest.raises(BadInputError, match="bytes"):
            load_raw(path)


class TestPngIO:
    def test_roundtrip(self, tmp_path):
        clip = make_clip("spin", 3, 16, 16, seed=4)
        save_png_dir(tmp_path / "clip", clip)
        back = load_png_dir(tmp_path / "clip")
        assert np.array_equal(frames_to_u8(back), frames_to_u8(clip))

    def test_numeric_ordering(self, tmp_path):
        from PIL import Image

        d = tmp_path / "clip"
        d.mkdir()
        for i, val in [(2, 20), (10, 100), (1, 10)]:
            arr = np.full((4, 4, 3), val, dtype=np.uint8)
            Image.fromarray(arr, mode="RGB").save(d / f"f{i}.png")
        frames = load_png_dir(d)
        vals = frames_to_u8(frames)[:, 0, 0, 0].tolist()
        assert vals == [10, 20, 100]

    def test_empty_dir_rejected(self, tmp_path):
        (tmp_path / "clip").mkdir()
        with pytest.raises(BadInputError, match="png"):
            load_png_dir(tmp_path / "clip")

    def test_dispatch(self, tmp_path):
        clip = make_clip("pan", 2, 16, 16, seed=6)
        save_raw(tmp_path / "c.rgb", clip)
        save_png_dir(tmp_path / "d", clip)
        a = load_frames(tmp_path / "c.rgb")
        b = load_frames(tmp_path / "d")
        assert np.array_equal(frames_to_u8(a), frames_to_u8(b))
        with pytest.raises(BadInputError, match="no such input"):
            load_frames(tmp_path / "missing")
