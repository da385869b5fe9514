import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import ndimage
from skimage.metrics import structural_similarity

from demoire.align import AlignmentField
from demoire.image import to_luma
from demoire.metrics import l1, mse, psnr, ssim, temporal_consistency
from demoire.synth import circular_shift


def textured(seed=0, shape=(48, 48, 3)):
    noise = np.random.default_rng(seed).random(shape)
    return ndimage.gaussian_filter(noise, (1.0, 1.0, 0)).astype(np.float32)


def test_psnr_examples():
    a = textured()
    assert psnr(a, a) == 99.0
    assert psnr(np.zeros((4, 4, 3)), np.ones((4, 4, 3))) == 0.0
    b = np.zeros((10, 10, 3))
    c = np.full((10, 10, 3), 0.1)  # MSE 0.01
    assert psnr(b, c) == pytest.approx(20.0)
    with pytest.raises(ValueError):
        psnr(b, np.zeros((10, 11, 3)))


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (6, 6, 3), elements=st.floats(0, 1)), arrays(np.float64, (6, 6, 3), elements=st.floats(0, 1)))
def test_psnr_symmetric_and_permutation_invariant(a, b):
    assert psnr(a, b) == psnr(b, a)
    perm = np.random.default_rng(0).permutation(36)
    pa = a.reshape(36, 3)[perm].reshape(6, 6, 3)
    pb = b.reshape(36, 3)[perm].reshape(6, 6, 3)
    assert psnr(pa, pb) == pytest.approx(psnr(a, b), rel=1e-12)


def test_l1_and_mse():
    a = np.zeros((2, 2, 3))
    b = np.full((2, 2, 3), 0.5)
    assert l1(a, b) == 0.5 and mse(a, b) == 0.25


def test_ssim_examples():
    a = textured(1)
    assert ssim(a, a) == 1.0
    assert ssim(a, 1.0 - a) < 0.1
    c1 = 0.01 ** 2
    lum = (2 * 0.2 * 0.7 + c1) / (0.2 ** 2 + 0.7 ** 2 + c1)
    assert ssim(np.full((16, 16, 3), 0.2), np.full((16, 16, 3), 0.7)) == pytest.approx(lum, abs=1e-6)
    with pytest.raises(ValueError):
        ssim(np.zeros((10, 20, 3)), np.zeros((10, 20, 3)))


@pytest.mark.parametrize("seed", range(3))
def test_ssim_matches_scikit_image(seed):
    a = textured(seed)
    b = np.clip(a + 0.1 * np.random.default_rng(seed + 10).standard_normal(a.shape), 0, 1).astype(np.float32)
    ours = ssim(a, b)
    ref = structural_similarity(
        to_luma(a).astype(np.float64), to_luma(b).astype(np.float64),
        gaussian_weights=True, sigma=1.5, use_sample_covariance=False, data_range=1.0,
    )
    assert ours == pytest.approx(ref, abs=1e-6)


def test_temporal_examples():
    a = textured(2)
    zero = AlignmentField.zeros(a.shape[:2], 16)
    assert temporal_consistency([a, a], [zero]) == 0.0
    assert temporal_consistency([np.zeros((32, 32, 3)), np.ones((32, 32, 3))],
                                [AlignmentField.zeros((32, 32), 16)]) == 1.0


def test_temporal_with_exact_fields_is_zero_inside():
    x = textured(3, (64, 64, 3))
    # field k aligns frame k onto frame k + 1: frame k is frame k + 1 with content moved by the shift
    frames = [circular_shift(x, 2, -1), x, circular_shift(x, -3, 2)]
    field = AlignmentField.constant((64, 64), 2, -1, 32)
    assert temporal_consistency(frames[:2], [field]) == pytest.approx(0.0, abs=1e-7)
    assert temporal_consistency([frames[2], frames[1]], [AlignmentField.constant((64, 64), -3, 2, 32)]) == pytest.approx(0.0, abs=1e-7)


def test_temporal_errors():
    a = np.zeros((20, 20, 3))
    with pytest.raises(ValueError):
        temporal_consistency([a], [])
    with pytest.raises(ValueError):
        temporal_consistency([a, a, a], [AlignmentField.zeros((20, 20), 16)])
