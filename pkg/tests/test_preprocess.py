import numpy as np
import pytest

from miquant import preprocess as pp
from miquant.errors import DegenerateRange, EmptyRegion, SpacingError
from miquant.volcore import LabeledCase, Mask, Volume


# --- noise estimation ---

def test_sigma_zero_on_constant_slice():
    assert pp.estimate_noise_sigma(np.full((32, 32), 7.0)) == 0.0


def test_sigma_recovers_gaussian_noise_level():
    rng = np.random.default_rng(0)
    estimates = []
    for _ in range(20):
        noise = rng.normal(0, 10, size=(256, 256))
        estimates.append(pp.estimate_noise_sigma(noise))
    estimates = np.array(estimates)
    assert np.all(np.abs(estimates - 10.0) / 10.0 < 0.15)


def test_sigma_checkerboard_analytic():
    # +-1 checkerboard: 5-point Laplacian is -+8 everywhere in the interior,
    # so sigma = 8 / 0.6745 / sqrt(20)
    yy, xx = np.mgrid[0:20, 0:20]
    board = ((yy + xx) % 2 * 2 - 1).astype(float)
    sigma = pp.estimate_noise_sigma(board + 5.0)
    assert sigma == pytest.approx(8.0 / 0.6745 / np.sqrt(20.0))
    assert sigma > 0


# --- non-local means ---

def test_nlm_sigma_zero_is_identity():
    rng = np.random.default_rng(1)
    img = rng.uniform(0, 255, (16, 16))
    np.testing.assert_array_equal(pp.denoise_nlm(img, 0.0), img)


def test_nlm_constant_slice_unchanged():
    img = np.full((20, 20), 33.0)
    np.testing.assert_allclose(pp.denoise_nlm(img, 5.0), img)


def test_nlm_reduces_mse_on_noisy_step_edge():
    rng = np.random.default_rng(2)
    clean = np.zeros((40, 40))
    clean[:, 20:] = 100.0
    wins = 0
    for _ in range(10):
        noisy = clean + rng.normal(0, 15, clean.shape)
        sigma = pp.estimate_noise_sigma(noisy)
        out = pp.denoise_nlm(noisy, sigma)
        if np.mean((out - clean) ** 2) < np.mean((noisy - clean) ** 2):
            wins += 1
    assert wins == 10


def test_nlm_never_widens_range():
    rng = np.random.default_rng(3)
    img = rng.uniform(10, 200, (24, 24))
    out = pp.denoise_nlm(img, 20.0)
    assert out.min() >= img.min() - 1e-9
    assert out.max() <= img.max() + 1e-9


# --- reslicing ---

def test_reslice_identity_when_canonical():
    vol = Volume((1.25, 1.25, 8.0), np.random.default_rng(4).uniform(0, 1, (2, 8, 8)))
    out = pp.reslice(vol)
    np.testing.assert_array_equal(out.data, vol.data)


def test_reslice_downsample_preserves_ramp_samples():
    nx = 16
    ramp = np.tile(np.arange(nx, dtype=float), (1, nx, 1))
    vol = Volume((1.25, 1.25, 8.0), ramp)
    out = pp.reslice(vol, (2.5, 2.5, 8.0))
    assert out.dims == (8, 8, 1)
    np.testing.assert_allclose(out.data[0, 0], np.arange(8) * 2.0)


def test_reslice_upsample_matches_affine_oracle():
    # closed form: bilinear interpolation of an affine function is exact
    n = 16
    yy, xx = np.mgrid[0:n, 0:n].astype(float)
    plane = 3.0 * xx - 2.0 * yy + 5.0
    vol = Volume((1.91, 1.91, 8.0), plane[None])
    out = pp.reslice(vol, (1.25, 1.25, 8.0))
    nx2 = round(n * 1.91 / 1.25)
    assert out.dims[0] == nx2
    u = np.clip(np.arange(nx2) * 1.25 / 1.91, 0, n - 1)
    v = np.clip(np.arange(out.dims[1]) * 1.25 / 1.91, 0, n - 1)
    expected = 3.0 * u[None, :] - 2.0 * v[:, None] + 5.0
    np.testing.assert_allclose(out.data[0], expected, atol=1e-12)
    # field of view preserved within one voxel
    assert abs(nx2 * 1.25 - n * 1.91) <= 1.25


def test_reslice_through_plane_flagged():
    vol = Volume((1.25, 1.25, 10.0), np.zeros((2, 4, 4)))
    with pytest.raises(SpacingError):
        pp.reslice(vol)


def test_reslice_mask_stays_binary():
    rng = np.random.default_rng(5)
    m = Mask((1.91, 1.91, 8.0), rng.random((2, 16, 16)) < 0.5)
    out = pp.reslice_mask(m)
    assert out.data.dtype == bool
    assert out.dims[0] == round(16 * 1.91 / 1.25)


# --- normalization and gamma ---

def _refs(n=12):
    myo = np.zeros((n, n), dtype=bool)
    myo[2:10, 2:10] = True
    pool = np.zeros((n, n), dtype=bool)
    pool[4:8, 4:8] = True
    myo &= ~pool
    return myo, pool


def test_normalize_endpoints_map_to_0_255():
    myo, pool = _refs()
    img = np.zeros((12, 12))
    img[myo] = 10.0
    img[pool] = 90.0
    cfg = pp.PreprocessConfig(p_lo=0, p_hi=100)
    out = pp.normalize_slice(img, myo, pool, cfg)
    assert out[myo].min() == 0.0
    assert out[pool].max() == 255.0
    assert np.all(out[~(myo | pool)] == 0.0)


def test_normalize_degenerate_range():
    myo, pool = _refs()
    img = np.full((12, 12), 50.0)
    with pytest.raises(DegenerateRange):
        pp.normalize_slice(img, myo, pool)


def test_normalize_empty_region():
    myo, pool = _refs()
    with pytest.raises(EmptyRegion):
        pp.normalize_slice(np.zeros((12, 12)), np.zeros_like(myo), pool)


def test_normalize_preserves_order():
    rng = np.random.default_rng(6)
    myo, pool = _refs()
    img = rng.uniform(0, 500, (12, 12))
    out = pp.normalize_slice(img, myo, pool)
    inside = myo | pool
    a, b = img[inside], out[inside]
    order = np.argsort(a)
    assert np.all(np.diff(b[order]) >= 0)


def test_gamma_identity_and_fixed_points():
    img = np.linspace(0, 255, 64).reshape(8, 8)
    np.testing.assert_allclose(pp.gamma_enhance(img, 1.0), img)
    assert pp.gamma_enhance(np.array([[255.0]]), 3.7)[0, 0] == 255.0
    assert pp.gamma_enhance(np.array([[0.0]]), 0.3)[0, 0] == 0.0


def test_gamma_closed_form():
    assert pp.gamma_enhance(np.array([[127.5]]), 2.0)[0, 0] == pytest.approx(63.75)


# --- full pipeline ---

def _piecewise_case(spacing=(1.25, 1.25, 8.0)):
    n = 24
    img = np.zeros((1, n, n))
    endo = np.zeros((1, n, n), dtype=bool)
    myo = np.zeros((1, n, n), dtype=bool)
    yy, xx = np.mgrid[0:n, 0:n]
    r = np.hypot(yy - 12, xx - 12)
    endo[0] = r <= 4
    myo[0] = (r > 4) & (r <= 9)
    img[0][endo[0]] = 200.0
    img[0][myo[0]] = 60.0
    return LabeledCase(
        "p",
        Volume(spacing, img),
        Mask(spacing, myo),
        Mask(spacing, endo),
        Mask(spacing, myo | endo),
    )


def test_pipeline_gamma1_on_clean_canonical_case_is_pure_normalization():
    case = _piecewise_case()
    cfg = pp.PreprocessConfig(gamma=1.0)
    out = pp.preprocess_case(case, cfg)
    # piecewise-constant slice: estimated sigma is 0, reslice is identity
    expected = pp.normalize_slice(case.volume.data[0], case.myocardium.data[0],
                                  case.endocardium.data[0], cfg)
    np.testing.assert_allclose(out.volume.data[0], expected)
    assert out.volume.spacing == (1.25, 1.25, 8.0)


def test_pipeline_output_range_and_mask_preservation():
    case = _piecewise_case()
    out = pp.preprocess_case(case)
    assert out.volume.data.min() >= 0.0
    assert out.volume.data.max() <= 255.0
    assert out.myocardium.count() == case.myocardium.count()


def test_pipeline_volume_preserved_across_reslice():
    # 1.91 mm case: scar-sized region volume in cm^3 within 5% after reslice
    case = _piecewise_case(spacing=(1.91, 1.91, 8.0))
    out = pp.preprocess_case(case)
    vol_before = case.myocardium.count() * 1.91 * 1.91 * 8.0 / 1000.0
    vol_after = out.myocardium.count() * 1.25 * 1.25 * 8.0 / 1000.0
    assert abs(vol_after - vol_before) / vol_before < 0.05
