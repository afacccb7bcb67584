import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from pixssr.spectra import (GammaConfig, PointSpectraSet, compose_input, draw_point_set, gather_points,
                            make_mask, masked_l1_target, point_count, sample_gamma, sample_gaussian)


def test_config_validation():
    with pytest.raises(ValueError):
        GammaConfig(alpha=0.0)
    with pytest.raises(ValueError):
        GammaConfig(beta=-1.0)
    with pytest.raises(ValueError):
        GammaConfig(clip_max=0.0)
    assert GammaConfig().mean == 0.5 and GammaConfig().variance == 0.125


@pytest.mark.parametrize("alpha", [0.3, 1.0, 2.0, 7.5])
def test_samples_nonnegative_and_clipped(alpha, rng):
    x = sample_gamma((64, 64), GammaConfig(alpha, 0.4), rng)
    assert x.shape == (64, 64)
    assert x.min() >= 0 and x.max() <= 1.0


def test_exponential_special_case_mean():
    x = sample_gamma(10**6, GammaConfig(1.0, 0.3), np.random.default_rng(5), clip=False)
    assert abs(x.mean() - 0.3) / 0.3 < 0.01


@pytest.mark.parametrize("alpha,beta", [(2.0, 0.25), (0.5, 1.0), (5.0, 0.1)])
def test_moments(alpha, beta):
    x = sample_gamma(10**6, GammaConfig(alpha, beta), np.random.default_rng(11), clip=False)
    assert abs(x.mean() - alpha * beta) / (alpha * beta) < 0.01
    assert abs(x.var() - alpha * beta**2) / (alpha * beta**2) < 0.03
    assert abs(stats.skew(x) - 2 / np.sqrt(alpha)) / (2 / np.sqrt(alpha)) < 0.10


@pytest.mark.parametrize("alpha", [0.4, 2.0, 9.0])
def test_distribution_matches_reference_sampler(alpha):
    # two-sample KS against numpy's own Gamma sampler as an independent oracle
    ours = sample_gamma(20000, GammaConfig(alpha, 1.0), np.random.default_rng(1), clip=False)
    ref = np.random.default_rng(2).gamma(alpha, 1.0, 20000)
    assert stats.ks_2samp(ours, ref).pvalue > 1e-3


def test_sampler_deterministic():
    a = sample_gamma((5, 7), GammaConfig(), np.random.default_rng(3))
    b = sample_gamma((5, 7), GammaConfig(), np.random.default_rng(3))
    assert a.tobytes() == b.tobytes()


def test_gaussian_baseline_matches_moments():
    cfg = GammaConfig(2.0, 0.25)
    x = sample_gaussian((10**6,), cfg, np.random.default_rng(0), clip=False)
    assert abs(x.mean() - cfg.mean) < 2e-3
    assert abs(x.var() - cfg.variance) / cfg.variance < 0.01
    assert abs(stats.skew(x)) < 0.02


# -- masks ------------------------------------------------------------------------

@pytest.mark.parametrize("h,w,omega,count", [
    (128, 128, 0.0001, 1),
    (128, 128, 0.1, 1638),
    (128, 128, 0.0, 0),
    (16, 16, 0.01, 2),
    (16, 16, 0.0001, 0),
    (10, 10, 1.0, 100),
])
def test_mask_counts_exact(h, w, omega, count):
    assert point_count(h, w, omega) == count
    assert make_mask(h, w, omega, 0).count == count


@given(st.integers(1, 40), st.integers(1, 40), st.floats(0, 1), st.integers(0, 2**32 - 1))
def test_mask_count_property(h, w, omega, seed):
    m = make_mask(h, w, omega, seed)
    assert m.count == int(np.floor(omega * h * w + 1e-9))
    assert m.grid.shape == (h, w)


def test_mask_regenerates_identically():
    a = make_mask(32, 32, 0.05, 42)
    b = make_mask(32, 32, 0.05, 42)
    assert np.array_equal(a.grid, b.grid) and a.seed == 42


def test_mask_rejects_out_of_range():
    with pytest.raises(ValueError):
        make_mask(4, 4, 1.5, 0)


def test_locations_are_mask_true_set():
    m = make_mask(9, 11, 0.2, 7)
    rows, cols = m.locations()
    assert set(zip(rows.tolist(), cols.tolist())) == set(zip(*np.nonzero(m.grid)))


# -- composition ------------------------------------------------------------------

def _point_set(rng, omega=0.1, b=5, h=8, w=8):
    cube = rng.uniform(0, 1, (b, h, w))
    return draw_point_set(cube, (b, h, w), omega, GammaConfig(), rng), cube


def test_infer_returns_field_bitwise(rng):
    pts, _ = _point_set(rng)
    assert compose_input(pts, "infer").tobytes() == pts.gamma_field.tobytes()


def test_infer_never_reads_real_points(rng):
    pts, _ = _point_set(rng)
    poisoned = PointSpectraSet(pts.gamma_field, pts.mask, np.full_like(pts.real_points, 1234.5))
    assert not np.any(compose_input(poisoned, "infer") == 1234.5)


def test_train_writes_real_spectra(rng):
    pts, cube = _point_set(rng)
    out = compose_input(pts, "train")
    for i, j in zip(*pts.mask.locations()):
        np.testing.assert_array_equal(out[:, i, j], cube[:, i, j])
    changed = np.any(out != pts.gamma_field, axis=0)
    assert changed.sum() <= pts.mask.count
    assert not np.any(changed & ~pts.mask.grid)


def test_train_without_real_points_raises(rng):
    pts, _ = _point_set(rng)
    with pytest.raises(ValueError):
        compose_input(PointSpectraSet(pts.gamma_field, pts.mask, None), "train")
    with pytest.raises(ValueError):
        compose_input(pts, "eval")


def test_point_count_must_match_mask(rng):
    m = make_mask(4, 4, 0.25, 0)
    with pytest.raises(ValueError):
        PointSpectraSet(np.zeros((2, 4, 4)), m, np.zeros((2, 3)))


def test_masked_target_single_point(rng):
    cube = rng.uniform(0, 1, (4, 128, 128))
    m = make_mask(128, 128, 0.0001, 3)
    values, (rows, cols) = masked_l1_target(PointSpectraSet(np.zeros_like(cube), m, gather_points(cube, m)))
    assert values.shape == (4, 1) and len(rows) == 1
    np.testing.assert_array_equal(values[:, 0], cube[:, rows[0], cols[0]])


def test_scatter_gather_round_trip(rng):
    pts, _ = _point_set(rng, omega=0.3)
    values, (rows, cols) = masked_l1_target(pts)
    canvas = np.zeros_like(pts.gamma_field)
    canvas[:, rows, cols] = values
    np.testing.assert_array_equal(gather_points(canvas, pts.mask), pts.real_points)


def test_masked_target_requires_real_points(rng):
    pts, _ = _point_set(rng)
    with pytest.raises(ValueError):
        masked_l1_target(PointSpectraSet(pts.gamma_field, pts.mask))


def test_field_is_nonnegative(rng):
    pts, _ = _point_set(rng)
    assert pts.gamma_field.min() >= 0
