import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from demoire.align import (
    AlignmentField,
    PyramidTooDeep,
    interior_error,
    phase_correlate,
    pyramid_align,
    warp,
)
from demoire.dataset import make_clip
from demoire.filters import FilterBank, demoire_frame
from demoire.image import to_luma
from demoire.synth import circular_shift


def texture(h=128, w=128, seed=0, sigma=2.0):
    noise = np.random.default_rng(seed).random((h, w))
    t = ndimage.gaussian_filter(noise, sigma, mode="wrap")
    return ((t - t.min()) / (t.max() - t.min())).astype(np.float32)


def rgb(plane):
    return np.repeat(plane[..., None], 3, axis=-1)


def bilinear_shift(plane, dx, dy):
    """Reference resampling: out(x) = plane(x - d), linear interpolation, wrap-around."""
    return ndimage.shift(plane.astype(np.float64), (dy, dx), order=1, mode="grid-wrap").astype(np.float32)


def test_correlate_identity():
    t = texture()
    s = phase_correlate(t, t)
    assert (s.dx, s.dy) == (0.0, 0.0) and not s.low_confidence
    noise = np.random.default_rng(0).random((32, 32))
    assert phase_correlate(noise, noise).confidence == pytest.approx(1.0)


def test_correlate_integer_circular_shift_is_exact():
    t = texture()
    s = phase_correlate(t, circular_shift(t, 3, -2))
    assert (s.dx, s.dy) == (3.0, -2.0)


@settings(max_examples=20, deadline=None)
@given(st.integers(-20, 20), st.integers(-20, 20))
def test_correlate_any_integer_shift(dx, dy):
    t = texture(64, 96, seed=3)
    s = phase_correlate(t, circular_shift(t, dx, dy))
    assert (s.dx, s.dy) == (float(dx), float(dy))


def test_correlate_half_pixel():
    t = texture(seed=1)
    s = phase_correlate(t, bilinear_shift(t, 0.5, 0.0))
    assert 0.25 <= s.dx <= 0.75
    assert abs(s.dy) <= 0.25


def test_correlate_degenerate_and_errors():
    flat = np.full((32, 32), 0.4, dtype=np.float32)
    s = phase_correlate(flat, flat)
    assert (s.dx, s.dy) == (0.0, 0.0) and s.low_confidence
    with pytest.raises(ValueError):
        phase_correlate(np.zeros((32, 32)), np.zeros((32, 33)))
    with pytest.raises(ValueError):
        phase_correlate(np.zeros((8, 32)), np.zeros((8, 32)))


def test_correlate_restricted_search():
    t = texture(seed=2)
    s = phase_correlate(t, circular_shift(t, 30, 0), center=(28, 1), radius=4)
    assert (s.dx, s.dy) == (30.0, 0.0)


def test_pyramid_identity():
    f = rgb(texture())
    field = pyramid_align(f, f)
    assert np.all(field.shifts == 0.0)
    assert field.shifts.shape == (2, 2, 2)


def test_pyramid_global_shift_single_tile():
    t = rgb(texture(64, 64, seed=4))
    field = pyramid_align(t, circular_shift(t, 5, 3), levels=2, tile_size=64)
    assert field.shifts.shape == (1, 1, 2)
    assert tuple(field.shifts[0, 0]) == (5.0, 3.0)


def test_pyramid_too_deep():
    t = rgb(texture(64, 64))
    with pytest.raises(PyramidTooDeep, match="pyramid too deep"):
        pyramid_align(t, t, levels=4)
    with pytest.raises(ValueError):
        pyramid_align(t, t, levels=0)
    with pytest.raises(ValueError):
        pyramid_align(t, t, tile_size=8)


def test_flat_tiles_inherit_global_shift():
    t = texture(128, 128, seed=5)
    t[:64, :64] = 0.5  # one blank tile
    mov = circular_shift(t, 2, 1)
    mov[:64, :64] = 0.5
    field = pyramid_align(rgb(t), rgb(mov))
    assert tuple(field.shifts[0, 0]) == field.global_shift
    assert field.confidence[0, 0] < 0.1


def test_tile_shifts_stay_within_search_radius_of_global():
    clip, _, _ = make_clip(0, 3, size=128)
    field = pyramid_align(clip.ref, clip.prev, search_radius=4)
    gx, gy = field.global_shift
    assert np.all(np.abs(field.shifts[..., 0] - gx) <= 4 + 0.5)
    assert np.all(np.abs(field.shifts[..., 1] - gy) <= 4 + 0.5)


def test_fine_stage_does_not_increase_error_on_jitter_suite():
    for i in range(4):
        clip, _, _ = make_clip(1, i, size=128)
        bank = FilterBank.estimate([f[..., c] for f in clip.frames for c in range(3)])
        ref, prev, nxt = (to_luma(demoire_frame(f, bank)) for f in clip.frames)
        for mov in (prev, nxt):
            full = pyramid_align(ref, mov)
            coarse = AlignmentField.constant(clip.shape, *full.global_shift, tile_size=full.tile_size)
            assert interior_error(ref, mov, full) <= interior_error(ref, mov, coarse)


def test_warp_zero_field_is_identity():
    f = rgb(texture(40, 50))
    out = warp(f, AlignmentField.zeros((40, 50), 16))
    assert np.max(np.abs(out - f)) <= 1e-6


def test_warp_integer_field_undoes_circular_shift():
    x = rgb(texture(64, 80, seed=6))
    frame = circular_shift(x, 3, -2)
    out = warp(frame, AlignmentField.constant((64, 80), 3, -2, tile_size=32))
    np.testing.assert_array_equal(out[3:-3, 3:-3], x[3:-3, 3:-3])


def test_warp_half_pixel_on_ramp_is_exact():
    ramp = np.tile(np.linspace(0, 1, 40, dtype=np.float64), (20, 1))
    out = warp(ramp, AlignmentField.constant((20, 40), 0.5, 0.0, tile_size=16))
    step = 1 / 39
    np.testing.assert_allclose(out[:, :-1], ramp[:, :-1] + 0.5 * step, atol=1e-6)


def test_warp_dimension_mismatch():
    with pytest.raises(ValueError):
        warp(np.zeros((20, 20)), AlignmentField.zeros((20, 21), 16))


def test_field_per_pixel_interpolates_between_tile_centres():
    shifts = np.zeros((1, 2, 2))
    shifts[0, 1, 0] = 2.0
    field = AlignmentField(16, (16, 32), shifts)
    dx, dy = field.per_pixel()
    # centres at columns 7.5 and 23.5; clamped outside them
    x = np.arange(32)
    np.testing.assert_allclose(dx[5], 2.0 * np.clip((x - 7.5) / 16.0, 0.0, 1.0), atol=1e-12)
    assert np.all(dy == 0.0)


def test_field_validation_and_dump():
    with pytest.raises(ValueError):
        AlignmentField(16, (32, 32), np.zeros((1, 2, 2)))
    bad = np.zeros((2, 2, 2))
    bad[0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        AlignmentField(16, (32, 32), bad)
    text = AlignmentField.constant((32, 48), 1.5, -2, tile_size=16).dump().splitlines()
    assert text[0] == "tile_x tile_y dx dy confidence"
    assert len(text) == 1 + 2 * 3
    assert text[1].split() == ["0", "0", "1.500000", "-2.000000", "1.000000"]
