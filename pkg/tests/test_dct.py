import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.fft import dctn

from demoire.dct import (
    ALL_MODES,
    BLOCK_SIZES,
    BlockSpectrum,
    Mode,
    block_apply,
    dc_adapted_matrix,
    forward_ddct,
    group_lengths,
    inverse_ddct,
    line_partition,
    transform_matrix,
)
from demoire.filters import FilterMask

modes = st.sampled_from(ALL_MODES)
sizes = st.sampled_from(BLOCK_SIZES)


def test_mode_tags_skip_dc():
    assert [int(m) for m in ALL_MODES] == [0, 1, 3, 4, 5, 6, 7, 8]
    assert Mode.parse("ddl") is Mode.DDL
    assert Mode.parse("5") is Mode.VR
    with pytest.raises(ValueError):
        Mode.parse(2)
    with pytest.raises(ValueError):
        Mode.parse("diagonal")


def test_partition_vertical_and_ddl():
    part = line_partition(Mode.V, 8)
    assert part.lengths == (8,) * 8
    assert part.lines[3] == tuple((r, 3) for r in range(8))
    ddl = line_partition(Mode.DDL, 8)
    assert ddl.lengths == (1, 2, 3, 4, 5, 6, 7, 8, 7, 6, 5, 4, 3, 2, 1)


def test_partition_vr_by_enumeration():
    # independent enumeration of the distinct values of 2c - r over the block
    values = {2 * c - r for r in range(8) for c in range(8)}
    part = line_partition(Mode.VR, 8)
    assert len(part.lines) == len(values) == 22
    assert sum(part.lengths) == 64
    for line in part.lines:
        assert len({2 * c - r for r, c in line}) == 1
        assert list(line) == sorted(line)


@pytest.mark.parametrize("mode", ALL_MODES)
@pytest.mark.parametrize("n", BLOCK_SIZES)
def test_partition_covers_each_pixel_once(mode, n):
    pixels = [px for line in line_partition(mode, n).lines for px in line]
    assert sorted(pixels) == [(r, c) for r in range(n) for c in range(n)]
    assert sum(group_lengths(mode, n)) == n * n


def test_partition_rejects_tiny_blocks():
    with pytest.raises(ValueError):
        line_partition(Mode.V, 1)


def test_constant_block_has_single_dc_coefficient():
    spec = forward_ddct(np.full((8, 8), 0.25), Mode.V)
    flat = spec.flat()
    assert flat[0] == pytest.approx(8 * 0.25, abs=1e-12)
    assert np.max(np.abs(flat[1:])) < 1e-12


@pytest.mark.parametrize("mode", ALL_MODES)
def test_constants_live_in_dc_for_every_mode(mode):
    flat = forward_ddct(np.full((8, 8), 0.6), mode).flat()
    assert flat[0] == pytest.approx(8 * 0.6, abs=1e-12)
    assert np.max(np.abs(flat[1:])) < 1e-12


def test_mode_v_matches_separable_dct():
    # oracle: scipy's orthonormal 2-D DCT-II; coefficient (k_row, k_col) sits in group k_row at position k_col
    rng = np.random.default_rng(7)
    for _ in range(100):
        block = rng.random((8, 8))
        ref = dctn(block, type=2, norm="ortho")
        groups = forward_ddct(block, Mode.V).groups
        ours = np.array(groups)
        np.testing.assert_allclose(ours, ref, rtol=0, atol=1e-6)


def test_mode_h_is_mode_v_transposed():
    rng = np.random.default_rng(8)
    block = rng.random((8, 8))
    np.testing.assert_allclose(np.array(forward_ddct(block, Mode.H).groups),
                               np.array(forward_ddct(block.T, Mode.V).groups), atol=1e-12)


def test_dc_adapted_basis_is_orthonormal_and_dct_for_equal_lengths():
    mat = dc_adapted_matrix((1, 2, 3, 2, 1))
    np.testing.assert_allclose(mat @ mat.T, np.eye(5), atol=1e-12)
    np.testing.assert_allclose(mat[0], np.sqrt([1, 2, 3, 2, 1]) / 3.0, atol=1e-12)
    eq = dc_adapted_matrix((4, 4, 4))
    np.testing.assert_allclose(eq, dctn(np.eye(3), type=2, norm="ortho", axes=[0]), atol=1e-12)


def test_ddl_parseval():
    block = np.random.default_rng(3).random((8, 8))
    coeffs = forward_ddct(block, Mode.DDL).flat()
    assert abs(np.sum(coeffs ** 2) - np.sum(block ** 2)) <= 1e-6 * np.sum(block ** 2)


@settings(max_examples=60, deadline=None)
@given(modes, sizes, st.integers(0, 2 ** 32 - 1))
def test_roundtrip_and_parseval(mode, n, seed):
    block = np.random.default_rng(seed).random((n, n)).astype(np.float32)
    spec = forward_ddct(block, mode)
    back = inverse_ddct(spec).astype(np.float32)
    assert np.max(np.abs(back - block)) <= 1e-5
    e_block = float(np.sum(block.astype(np.float64) ** 2))
    assert abs(float(np.sum(spec.flat() ** 2)) - e_block) <= 1e-6 * e_block


@settings(max_examples=40, deadline=None)
@given(modes, st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2 ** 32 - 1))
def test_linearity(mode, a, b, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.random((8, 8)), rng.random((8, 8))
    lhs = forward_ddct(a * x + b * y, mode).flat()
    rhs = a * forward_ddct(x, mode).flat() + b * forward_ddct(y, mode).flat()
    assert np.max(np.abs(lhs - rhs)) <= 1e-5


def test_inverse_examples_and_errors():
    zero = BlockSpectrum.from_flat(Mode.DDR, 8, np.zeros(64))
    assert np.all(inverse_ddct(zero) == 0)
    dc = np.zeros(64)
    dc[0] = 8.0
    np.testing.assert_allclose(inverse_ddct(BlockSpectrum.from_flat(Mode.V, 8, dc)), 1.0, atol=1e-12)
    bad = BlockSpectrum(Mode.V, 8, tuple(np.zeros(7) for _ in range(8)))
    with pytest.raises(ValueError):
        inverse_ddct(bad)
    with pytest.raises(ValueError):
        forward_ddct(np.zeros((8, 7)), Mode.V)


@pytest.mark.parametrize("mode", ALL_MODES)
def test_transform_matrix_is_orthogonal(mode):
    mat = transform_matrix(mode, 8)
    np.testing.assert_allclose(mat @ mat.T, np.eye(64), atol=1e-10)


def test_block_apply_identity_and_dc_only():
    rng = np.random.default_rng(4)
    plane = rng.random((21, 19)).astype(np.float32)
    for mode in ALL_MODES:
        out = block_apply(plane, mode, 8, FilterMask.identity(mode, 8))
        assert out.shape == plane.shape
        assert np.max(np.abs(out - plane)) <= 1e-5
    dc_only = np.zeros(64)
    dc_only[0] = 1.0
    const = np.full((16, 24), 0.4, dtype=np.float32)
    for mode in ALL_MODES:
        out = block_apply(const, mode, 8, FilterMask.from_flat(mode, 8, dc_only))
        np.testing.assert_allclose(out, 0.4, atol=1e-6)


@pytest.mark.parametrize("mode", [Mode.V, Mode.DDR, Mode.HU])
def test_zeroing_one_coefficient_subtracts_its_basis_function(mode):
    rng = np.random.default_rng(int(mode))
    plane = rng.random((8, 8)).astype(np.float32)
    k = 11
    gains = np.ones(64)
    gains[k] = 0.0
    out = block_apply(plane, mode, 8, FilterMask.from_flat(mode, 8, gains))
    coeff = forward_ddct(plane, mode).flat()[k]
    onehot = np.zeros(64)
    onehot[k] = 1.0
    basis = inverse_ddct(BlockSpectrum.from_flat(mode, 8, onehot))
    np.testing.assert_allclose(out, plane - coeff * basis, atol=1e-5)


def test_block_apply_rejects_mismatched_mask():
    with pytest.raises(ValueError):
        block_apply(np.zeros((8, 8)), Mode.V, 8, FilterMask.identity(Mode.H, 8))
    with pytest.raises(ValueError):
        block_apply(np.zeros((8, 8)), Mode.V, 8, FilterMask.identity(Mode.V, 4))


def test_orthonormal_scale_of_length_one_lines():
    # the corner pixels of a diagonal mode are lines of their own
    part = line_partition(Mode.DDL, 4)
    assert part.lengths[0] == 1 and part.lengths[-1] == 1
    block = np.zeros((4, 4))
    block[0, 0] = 1.0
    assert np.sum(forward_ddct(block, Mode.DDL).flat() ** 2) == pytest.approx(1.0)
    assert math.isclose(np.linalg.norm(transform_matrix(Mode.DDL, 4)[:, 0]), 1.0)
