import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slrobust import media
from slrobust.media import AugmentConfig, Video


def _img(rng, h=5, w=7):
    return rng.uniform(0, 1, (h, w, 3))


def test_matting_identity_and_replacement():
    rng = np.random.default_rng(0)
    sign, scene = _img(rng), _img(rng)
    assert np.array_equal(media.composite_matting(sign, scene, np.ones((5, 7))), sign)
    assert np.array_equal(media.composite_matting(sign, scene, np.zeros((5, 7))), scene)


def test_matting_half_mask_hand_value():
    sign = np.full((1, 1, 3), 0.8)
    scene = np.full((1, 1, 3), 0.2)
    np.testing.assert_allclose(media.composite_matting(sign, scene, np.full((1, 1), 0.5)), 0.5, rtol=0, atol=1e-15)


def test_mixup_hand_values():
    rng = np.random.default_rng(1)
    sign, scene = _img(rng), _img(rng)
    assert np.array_equal(media.mixup_background(sign, scene, 0.0), sign)
    assert np.array_equal(media.mixup_background(sign, scene, 1.0), scene)
    out = media.mixup_background(np.full((1, 1, 3), 0.2), np.full((1, 1, 3), 0.6), 0.5)
    np.testing.assert_allclose(out, 0.4, atol=1e-15)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), lam=st.floats(0, 1))
def test_mixup_is_matting_with_constant_mask(seed, lam):
    rng = np.random.default_rng(seed)
    sign, scene = _img(rng), _img(rng)
    a = media.mixup_background(sign, scene, lam)
    b = media.composite_matting(sign, scene, np.full((5, 7), 1.0 - lam))
    assert np.array_equal(a, b)
    assert np.all(a <= np.maximum(sign, scene)) and np.all(a >= np.minimum(sign, scene))


def test_dimension_mismatch_names_axis():
    with pytest.raises(ValueError, match="width"):
        media.composite_matting(np.zeros((4, 4, 3)), np.zeros((4, 5, 3)), np.ones((4, 4)))
    with pytest.raises(ValueError, match="height"):
        media.composite_matting(np.zeros((4, 4, 3)), np.zeros((4, 4, 3)), np.ones((3, 4)))
    with pytest.raises(ValueError):
        media.mixup_background(np.zeros((2, 2, 3)), np.zeros((2, 2, 3)), 1.5)


def test_sample_lambda():
    cfg = AugmentConfig()
    vals = [media.sample_lambda(np.random.default_rng(s), cfg) for s in range(200)]
    assert min(vals) >= 0.1 and max(vals) <= 0.6
    assert media.sample_lambda(np.random.default_rng(3), AugmentConfig(lambda_min=0.3, lambda_max=0.3)) == 0.3
    assert media.sample_lambda(np.random.default_rng(9), cfg) == media.sample_lambda(np.random.default_rng(9), cfg)


def test_color_jitter():
    rng = np.random.default_rng(2)
    img = _img(rng)
    assert np.array_equal(media.color_jitter(img, np.random.default_rng(0), 0.0), img)
    a = media.color_jitter(img, np.random.default_rng(5), 0.4)
    b = media.color_jitter(img, np.random.default_rng(5), 0.4)
    assert np.array_equal(a, b)
    gray = np.repeat(rng.uniform(0, 1, (5, 7, 1)), 3, axis=2)
    for s in range(20):
        out = media.color_jitter(gray, np.random.default_rng(s), 0.4)
        np.testing.assert_allclose(out[..., 0], out[..., 1], atol=1e-12)
        np.testing.assert_allclose(out[..., 1], out[..., 2], atol=1e-12)


def test_rotation_identity_and_marked_pixel():
    rng = np.random.default_rng(3)
    img = _img(rng, 9, 9)
    assert np.array_equal(media.random_rotate(img, np.random.default_rng(0), 0.0), img)
    marked = np.zeros((9, 9, 3))
    r, c = 1, 6
    marked[r, c] = 1.0
    out = media.rotate(marked, 90.0)
    cy = cx = 4.0
    # counter-clockwise as displayed: (x, y) -> (x', y') with y pointing down
    dx, dy = c - cx, r - cy
    ex, ey = cx + dy, cy - dx
    peak = np.unravel_index(np.argmax(out[..., 0]), (9, 9))
    assert abs(peak[0] - ey) <= 1 and abs(peak[1] - ex) <= 1
    a = media.random_rotate(img, np.random.default_rng(4), 15)
    assert np.array_equal(a, media.random_rotate(img, np.random.default_rng(4), 15))


def test_resize():
    rng = np.random.default_rng(4)
    img = _img(rng)
    assert np.array_equal(media.resize(img, 5, 7), img)
    const = np.full((2, 2, 3), 0.37)
    assert np.all(media.resize(const, 4, 4) == 0.37)
    checker = np.array([[0.0, 1.0], [1.0, 0.0]])
    # 3x3 output: the centre sample lands exactly between the four corners
    out = media.resize(checker, 3, 3)
    assert out[1, 1] == pytest.approx(checker.mean())
    with pytest.raises(ValueError):
        media.resize(img, 0, 3)


def _video(rng, t=2, size=12):
    return Video("v", rng.uniform(0, 1, (t, size, size, 3)), ("A",))


def test_spatial_augment_shared_crop_and_flip():
    rng = np.random.default_rng(5)
    frame = rng.uniform(0, 1, (20, 20, 3))
    v = Video("v", np.stack([frame, frame]), ("A",))
    cfg = AugmentConfig(crop_size=224, resize_size=256)
    for s in range(6):
        out = media.spatial_augment(v, np.random.default_rng(s), cfg)
        assert out.frames.shape == (2, 224, 224, 3)
        # identical inputs stay identical only if crop and flip are shared
        assert np.array_equal(out.frames[0], out.frames[1])
        assert out.glosses == v.glosses


def test_temporal_augment_bounds():
    rng = np.random.default_rng(6)
    v = Video("v", np.arange(10, dtype=float).reshape(10, 1, 1, 1) * np.ones((1, 2, 2, 3)) / 10, ("A", "B"))
    lengths = set()
    for s in range(300):
        out = media.temporal_augment(v, np.random.default_rng(s))
        lengths.add(len(out))
        order = out.frames[:, 0, 0, 0]
        assert np.all(np.diff(order) >= 0)  # duplicates sit next to their source
        assert out.glosses == v.glosses
    assert min(lengths) >= 8 and max(lengths) <= 12
    ident = media.temporal_augment(v, rng, AugmentConfig(dup_frac_max=0, del_frac_max=0))
    assert np.array_equal(ident.frames, v.frames)
    a = media.temporal_augment(v, np.random.default_rng(1))
    assert np.array_equal(a.frames, media.temporal_augment(v, np.random.default_rng(1)).frames)


def test_temporal_augment_bound_arithmetic():
    # L=10: up to 2 duplicates, then up to floor(0.2 * 12) = 2 deletions
    assert math.floor(0.2 * 10) == 2 and math.floor(0.2 * 12) == 2


def test_video_is_immutable():
    v = _video(np.random.default_rng(0))
    with pytest.raises(ValueError):
        v.frames[0, 0, 0, 0] = 1.0


def test_png_round_trip(tmp_path):
    rng = np.random.default_rng(7)
    q = media.to_uint8(_img(rng)) / 255.0
    media.save_frame(tmp_path / "a.png", q)
    assert np.array_equal(media.load_frame(tmp_path / "a.png"), q)
    assert media.to_uint8(np.array([0.5 / 255, 1.5 / 255])).tolist() == [1, 2]  # round half up
    with pytest.raises(OSError, match="missing.png"):
        media.load_frame(tmp_path / "missing.png")


def test_video_dir_round_trip(tmp_path):
    frames = media.to_uint8(np.random.default_rng(8).uniform(0, 1, (3, 4, 4, 3))) / 255.0
    paths = media.save_video_dir(tmp_path / "v", frames)
    assert [p.name for p in paths] == ["000001.png", "000002.png", "000003.png"]
    assert np.array_equal(media.load_video_dir(tmp_path / "v").frames, frames)
