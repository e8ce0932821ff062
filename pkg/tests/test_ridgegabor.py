import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import ndimage

from ulprint.ridgegabor import (GaborConfig, GaborParams, binarize, fuse_enhanced, gabor_enhance, gabor_kernel,
                                make_groundtruth, orientation_field, region_mask, remove_small_components,
                                ridge_frequency)
from ulprint.segnet.losses import iou
from ulprint.synthetic import grating, synthetic_latent


def angle_diff(a, b):
    d = np.mod(a - b, np.pi)
    return np.minimum(d, np.pi - d)


def fields(img, block=16):
    of = orientation_field(img, block)
    return of, ridge_frequency(img, of)


def interior(grid):
    return grid[1:-1, 1:-1]


# ------------------------------------------------------------- orientation

def test_vertical_grating_orientation():
    x = np.arange(128)
    img = np.tile(0.5 + 0.5 * np.sin(2 * np.pi * x / 8), (128, 1))
    of = orientation_field(img)
    assert np.max(interior(angle_diff(of.angles, np.pi / 2))) < 0.02
    assert of.grid == (8, 8)


@pytest.mark.parametrize("theta", [np.pi / 4, 0.0, 1.2, 2.6])
def test_rotated_grating_orientation(theta):
    of = orientation_field(grating((128, 128), 9.0, theta))
    assert np.max(interior(angle_diff(of.angles, theta))) < 0.05


def test_orientation_field_ranges_and_grid():
    img = np.random.default_rng(0).random((70, 50))
    of = orientation_field(img, 16)
    assert of.grid == (5, 4)
    assert np.all((of.angles >= 0) & (of.angles < np.pi))
    assert np.all((of.coherence >= 0) & (of.coherence <= 1))


def test_constant_image_has_zero_coherence():
    of = orientation_field(np.full((64, 64), 0.4))
    assert np.all(of.coherence == 0)
    assert np.all((of.angles >= 0) & (of.angles < np.pi))


@pytest.mark.parametrize("theta", [0.3, 1.0, 2.0])
def test_orientation_equivariant_under_rot90(theta):
    img = grating((128, 128), 10.0, theta)
    a = orientation_field(img).angles
    b = orientation_field(np.rot90(img)).angles
    expected = np.rot90(np.mod(a + np.pi / 2, np.pi))
    assert np.max(interior(angle_diff(b, expected))) < 0.05


def test_orientation_rejects_small_image():
    with pytest.raises(ValueError):
        orientation_field(np.zeros((20, 40)), 16)


# --------------------------------------------------------------- frequency

@pytest.mark.parametrize("period,tol", [(8.0, 0.01), (12.0, 0.008)])
@pytest.mark.parametrize("theta", [0.0, np.pi / 4, np.pi / 2])
def test_grating_frequency(period, tol, theta):
    img = grating((128, 128), period, theta)
    _, ff = fields(img)
    assert np.all(interior(ff.valid))
    assert np.max(np.abs(interior(ff.freqs) - 1 / period)) < tol


def test_constant_frequency_invalid():
    _, ff = fields(np.full((64, 64), 0.5))
    assert not ff.valid.any()
    assert np.all(np.isfinite(ff.freqs))


def test_frequency_valid_range():
    img = np.random.default_rng(1).random((96, 96))
    _, ff = fields(img)
    f = ff.freqs[ff.valid]
    assert np.all((f >= 1 / 25) & (f <= 1 / 3))


def test_frequency_shape_mismatch():
    of = orientation_field(np.zeros((64, 64)))
    with pytest.raises(ValueError):
        ridge_frequency(np.zeros((64, 80)), of)


# ------------------------------------------------------------------ gabor

def test_gabor_param_validation():
    with pytest.raises(ValueError):
        GaborParams(sigma_x=0)
    with pytest.raises(ValueError):
        GaborParams(4, 4, 7)


def test_gabor_kernel_zero_mean_and_symmetric():
    k = gabor_kernel(0.7, 0.1)
    assert abs(k.sum()) < 1e-12
    assert np.allclose(k, k[::-1, ::-1])


def _peak(img):
    spec = np.abs(np.fft.fft2(img - img.mean()))
    return np.unravel_index(np.argmax(spec), spec.shape)


def test_gabor_enhance_clean_grating():
    img = grating((128, 128), 8.0, lo=0.3, hi=0.7)
    of, ff = fields(img)
    out = gabor_enhance(img, of, ff)
    assert np.ptp(out) >= np.ptp(img)
    assert _peak(out) == _peak(img)


def test_gabor_enhance_raises_snr():
    clean = grating((128, 128), 8.0, lo=0.25, hi=0.75)
    noisy = np.clip(clean + np.random.default_rng(2).normal(0, 0.1, clean.shape), 0, 1)
    of, ff = fields(noisy)
    out = gabor_enhance(noisy, of, ff)

    def snr(x):
        spec = np.abs(np.fft.fft2(x - x.mean())) ** 2
        fy, fx = np.meshgrid(np.fft.fftfreq(128), np.fft.fftfreq(128), indexing="ij")
        band = np.abs(np.hypot(fx, fy) - 1 / 8) < 0.02
        return spec[band].sum() / spec[~band].sum()

    assert snr(out) > snr(noisy)


def test_gabor_enhance_constant_passthrough():
    img = np.full((64, 64), 0.42)
    of, ff = fields(img)
    assert np.array_equal(gabor_enhance(img, of, ff), img)


# ----------------------------------------------------------------- fusion

def test_fuse_identity_when_equal():
    a = grating((32, 32), 8.0, lo=0.0, hi=1.0)
    a = (a - a.min()) / np.ptp(a)
    assert np.allclose(fuse_enhanced(a, a, a), a)


def test_fuse_fills_halves():
    g = grating((32, 64), 8.0)
    left = np.where(np.arange(64) < 32, g, 1.0)
    right = np.where(np.arange(64) >= 32, g, 1.0)
    blank = np.ones((32, 64))
    out = fuse_enhanced(left, right, blank)
    assert np.allclose(out, (g - g.min()) / np.ptp(g))


@given(arrays(np.float64, (6, 6), elements=st.floats(0, 1)), arrays(np.float64, (6, 6), elements=st.floats(0, 1)),
       arrays(np.float64, (6, 6), elements=st.floats(0, 1)))
def test_fuse_permutation_invariant(a, b, c):
    ref = fuse_enhanced(a, b, c)
    for perm in ((b, a, c), (c, b, a), (a, c, b)):
        assert np.array_equal(fuse_enhanced(*perm), ref)
    assert ref.min() >= 0 and ref.max() <= 1


def test_fuse_errors():
    with pytest.raises(ValueError):
        fuse_enhanced(np.zeros((4, 4)), np.zeros((4, 4)), np.zeros((4, 5)))
    with pytest.raises(ValueError):
        fuse_enhanced(np.zeros((4, 4)), np.zeros((4, 4)), np.zeros((4, 4)), mode="max")


# ------------------------------------------------------------ binarization

def test_binarize_grating_half():
    img = grating((128, 128), 8.0, 0.5)
    of, ff = fields(img)
    m = binarize(img, of, ff)
    assert abs(m.mean() - 0.5) <= 0.05


def test_binarize_constant_empty():
    img = np.full((64, 64), 0.5)
    of, ff = fields(img)
    assert not binarize(img, of, ff).any()


def test_binarize_inverted_is_complement():
    img = grating((128, 128), 9.0, 1.1)
    of, ff = fields(img)
    inv = 1.0 - img
    of2, ff2 = fields(inv)
    m1, m2 = binarize(img, of, ff), binarize(inv, of2, ff2)
    sl = (slice(16, -16), slice(16, -16))
    assert np.mean(m2[sl] != 1 - m1[sl]) <= 0.02


def test_binarize_marks_dark_ridges():
    img = grating((128, 128), 10.0, 0.4)
    of, ff = fields(img)
    m = binarize(img, of, ff)
    sl = (slice(16, -16), slice(16, -16))
    assert np.mean(m[sl] == (img[sl] < 0.5)) > 0.95


# ------------------------------------------------------------ region mask

def test_region_clean_grating():
    of, ff = fields(grating((128, 128), 9.0, 0.8))
    assert np.all(region_mask(of, ff)[16:-16, 16:-16] == 1)


def test_region_constant():
    of, ff = fields(np.full((64, 64), 0.3))
    assert not region_mask(of, ff).any()


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_region_half_grating_half_noise(seed):
    rng = np.random.default_rng(seed)
    img = grating((128, 128), 9.0, 0.6, lo=0.2, hi=0.8)
    img[:, 64:] = rng.random((128, 64))
    of, ff = fields(img)
    m = region_mask(of, ff)
    assert np.all(m[16:-16, 16:48] == 1)
    assert np.mean(m[:, 64:] == 0) >= 0.9


def test_region_smoothing_removes_isolated_blocks():
    of, ff = fields(np.full((128, 128), 0.3))
    of.coherence[3, 3] = 1.0
    ff.valid[3, 3] = True
    assert region_mask(of, ff, smooth=0).sum() == 16 * 16
    assert region_mask(of, ff, smooth=3).sum() == 0


def test_binarize_within_region():
    img, _, _ = synthetic_latent(128, seed=3)
    of, ff = fields(img)
    reg = region_mask(of, ff)
    assert np.all((binarize(img, of, ff) & reg) <= reg)


# ---------------------------------------------------------- speckle removal

@given(arrays(np.uint8, (20, 20), elements=st.integers(0, 1)))
@settings(max_examples=50, deadline=None)
def test_remove_small_components(mask):
    out = remove_small_components(mask, 4)
    assert np.all(out <= mask)
    labels, n = ndimage.label(out, np.ones((3, 3)))
    assert n == 0 or np.bincount(labels.ravel())[1:].min() >= 4
    # large components survive untouched
    labels0, _ = ndimage.label(mask, np.ones((3, 3)))
    sizes = np.bincount(labels0.ravel())
    big = (sizes >= 4)[labels0] & (labels0 > 0)
    assert np.array_equal(out.astype(bool), big)


# ------------------------------------------------------------ ground truth

@pytest.mark.parametrize("seed", [0, 1, 2])
def test_groundtruth_fixture_iou(seed):
    img, ridges, _ = synthetic_latent(256, seed=seed)
    assert iou(make_groundtruth(img), ridges) >= 0.7


def test_groundtruth_constant_and_deterministic():
    assert not make_groundtruth(np.full((64, 64), 0.5)).any()
    img, _, _ = synthetic_latent(128, seed=4)
    assert np.array_equal(make_groundtruth(img), make_groundtruth(img))


def test_groundtruth_speckle_free():
    img, _, _ = synthetic_latent(192, seed=5)
    m = make_groundtruth(img)
    labels, n = ndimage.label(m, np.ones((3, 3)))
    assert n > 0 and np.bincount(labels.ravel())[1:].min() >= 4


def test_groundtruth_mean_fusion_selectable():
    img, ridges, _ = synthetic_latent(192, seed=6)
    m = make_groundtruth(img, GaborConfig(fusion="mean"))
    assert m.shape == img.shape and set(np.unique(m)) <= {0, 1}
