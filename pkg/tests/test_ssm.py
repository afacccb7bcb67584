import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pixssr import tensor as T
from pixssr.ssm import (ScanDirection, SsmParams, discretize, flatten_direction, linear_recurrence,
                        multi_direction_scan, scan_order, selective_scan, selective_scan_fast, ssm_core,
                        unflatten_direction)

from _gradcheck import check_op


def scan_deviation(fast, naive):
    """Max over channels of max|fast - naive| / max|naive| (channel-relative)."""
    scale = np.maximum(np.abs(naive).max(axis=-2, keepdims=True), 1e-300)
    return float(np.max(np.abs(fast - naive) / scale))


# -- discretisation ------------------------------------------------------------

def test_zoh_closed_form():
    a_bar, b_bar = discretize(np.array([1.0]), np.array([-1.0]), np.array([1.0]))
    assert a_bar.data[0] == pytest.approx(np.exp(-1), abs=1e-15)
    assert b_bar.data[0] == pytest.approx(1 - np.exp(-1), abs=1e-15)


def test_zoh_small_step_limit():
    a_bar, b_bar = discretize(np.array([1e-12]), np.array([-3.0]), np.array([2.0]))
    assert a_bar.data[0] == pytest.approx(1.0, abs=1e-11)
    assert b_bar.data[0] == pytest.approx(0.0, abs=1e-11)


@pytest.mark.parametrize("a", [0.0, 1e-9, -1e-9])
def test_zoh_zero_a_limit(a):
    a_bar, b_bar = discretize(np.array([0.3]), np.array([a]), np.array([2.0]))
    assert a_bar.data[0] == pytest.approx(1.0, abs=1e-8)
    assert b_bar.data[0] == pytest.approx(0.6, rel=1e-8)


@given(st.floats(1e-4, 5.0), st.floats(-5.0, -1e-3), st.floats(-3, 3))
def test_zoh_matches_expm1_formula(delta, a, b):
    a_bar, b_bar = discretize(np.array([delta]), np.array([a]), np.array([b]))
    assert a_bar.data[0] == pytest.approx(np.exp(delta * a), rel=1e-13)
    assert b_bar.data[0] == pytest.approx(np.expm1(delta * a) / a * b, rel=1e-12, abs=1e-15)


def test_zoh_rejects_nonpositive_step():
    with pytest.raises(ValueError):
        discretize(np.array([0.0]), np.array([-1.0]), np.array([1.0]))


# -- recurrence ------------------------------------------------------------------

def test_scalar_recurrence_by_hand():
    one = np.ones((3, 1, 1))
    y = ssm_core(T.Tensor(np.ones((3, 1))), T.Tensor(0.5 * one), T.Tensor(one), T.Tensor(np.ones((3, 1))),
                 T.Tensor(np.zeros(1)))
    np.testing.assert_allclose(y.data[:, 0], [1.0, 1.5, 1.75])


def test_residual_only_path(rng):
    x = rng.standard_normal((5, 2))
    zeros = np.zeros((5, 2, 3))
    y = ssm_core(T.Tensor(x), T.Tensor(zeros), T.Tensor(zeros), T.Tensor(rng.standard_normal((5, 3))),
                 T.Tensor(np.ones(2)))
    np.testing.assert_array_equal(y.data, x)


def test_single_step_closed_form(rng):
    p = SsmParams(3, 4, rng)
    x = T.Tensor(rng.standard_normal((1, 3)))
    a_bar, b_bar, c = p.coefficients(x)
    expected = np.einsum("n,cn->c", c.data[0], b_bar.data[0]) * x.data[0] + p.d.data * x.data[0]
    np.testing.assert_allclose(selective_scan(x, p).data[0], expected, rtol=1e-13)
    np.testing.assert_array_equal(selective_scan_fast(x, p).data, selective_scan(x, p).data)


@pytest.mark.parametrize("seed", range(10))
def test_fast_matches_naive_random(seed):
    r = np.random.default_rng(seed)
    length, c, n = int(r.integers(1, 300)), int(r.integers(1, 6)), int(r.integers(1, 9))
    p = SsmParams(c, n, r)
    x = T.Tensor(r.standard_normal((length, c)))
    assert scan_deviation(selective_scan_fast(x, p).data, selective_scan(x, p).data) < 1e-10


def test_fast_matches_naive_l257(rng):
    p = SsmParams(4, 8, rng)
    x = T.Tensor(rng.standard_normal((257, 4)))
    assert scan_deviation(selective_scan_fast(x, p).data, selective_scan(x, p).data) < 1e-10


def test_fast_matches_naive_ramp(rng):
    p = SsmParams(2, 4, rng)
    x = T.Tensor(np.tile(np.linspace(0, 1, 64)[:, None], (1, 2)))
    np.testing.assert_allclose(selective_scan_fast(x, p).data, selective_scan(x, p).data, rtol=1e-10, atol=0)


def test_recurrence_stability_bound(rng):
    # constant input, fixed coefficients: |h_t| <= |b_bar| |x| / (1 - a_bar)
    a = np.full((200, 1), 0.9)
    b = 0.7
    h = linear_recurrence(T.Tensor(a), T.Tensor(np.full((200, 1), b * 2.0)), method="naive").data
    assert np.all(np.abs(h) <= b * 2.0 / (1 - 0.9) + 1e-12)


def test_scan_rejects_nonfinite_and_bad_shapes(rng):
    p = SsmParams(2, 3, rng)
    with pytest.raises(FloatingPointError):
        selective_scan(T.Tensor(np.array([[np.nan, 0.0]])), p)
    with pytest.raises(T.ShapeError):
        selective_scan(T.Tensor(np.zeros((4, 3))), p)
    with pytest.raises(T.ShapeError):
        selective_scan(T.Tensor(np.zeros((0, 2))), p)


def test_unknown_method(rng):
    with pytest.raises(ValueError):
        linear_recurrence(T.Tensor(np.ones((2, 1))), T.Tensor(np.ones((2, 1))), method="warp")


def test_parameter_invariants(rng):
    p = SsmParams(4, 6, rng)
    assert np.all(-np.exp(p.a_log.data) < 0)
    delta = T.softplus(T.matmul(T.Tensor(rng.standard_normal((9, 4)) * 50), p.delta_w) + p.delta_b).data
    assert np.all(delta > 0)


# -- directions ------------------------------------------------------------------

def test_exactly_four_directions():
    assert len(ScanDirection) == 4


@pytest.mark.parametrize("h", [1, 2, 7, 16])
@pytest.mark.parametrize("w", [1, 2, 7, 16])
@pytest.mark.parametrize("direction", list(ScanDirection))
def test_flatten_unflatten_bijective(h, w, direction, rng):
    f = rng.standard_normal((3, h, w))
    order = scan_order(direction, h, w)
    assert sorted(order.tolist()) == list(range(h * w))
    back = unflatten_direction(flatten_direction(f, direction), direction, h, w)
    assert back.tobytes() == f.tobytes()


def test_single_pixel_all_directions_agree(rng):
    p = SsmParams(3, 4, rng)
    f = T.Tensor(rng.standard_normal((3, 1, 1)))
    single = selective_scan(T.Tensor(f.data.reshape(3, 1).T), p).data.T.reshape(3, 1, 1)
    np.testing.assert_allclose(multi_direction_scan(f, p).data, single, atol=1e-14)


@pytest.mark.parametrize("direction", list(ScanDirection))
def test_one_direction_matches_index_map_oracle(direction, rng):
    p = SsmParams(2, 3, rng)
    f = rng.standard_normal((2, 3, 4))
    seq = flatten_direction(f, direction)
    oracle = unflatten_direction(selective_scan(T.Tensor(seq), p).data, direction, 3, 4)
    got = multi_direction_scan(T.Tensor(f), p, method="naive", directions=(direction,)).data
    np.testing.assert_allclose(got, oracle, atol=1e-13)


def test_mean_of_four_directions(rng):
    p = SsmParams(2, 3, rng)
    f = rng.standard_normal((2, 4, 3))
    each = [multi_direction_scan(T.Tensor(f), p, "naive", (d,)).data for d in ScanDirection]
    np.testing.assert_allclose(multi_direction_scan(T.Tensor(f), p, "naive").data, np.mean(each, axis=0), atol=1e-13)


def test_flip_symmetry(rng):
    p = SsmParams(2, 3, rng)
    f = rng.standard_normal((2, 3, 5))
    lr = multi_direction_scan(T.Tensor(f), p, "naive", (ScanDirection.LEFT_RIGHT,)).data
    rl = multi_direction_scan(T.Tensor(f[:, ::-1, ::-1].copy()), p, "naive", (ScanDirection.RIGHT_LEFT,)).data
    np.testing.assert_allclose(lr, rl[:, ::-1, ::-1], atol=1e-13)


# -- gradients -------------------------------------------------------------------

@pytest.mark.parametrize("method", ["naive", "fast"])
def test_scan_gradient_wrt_input(method, rng):
    p = SsmParams(3, 4, rng)
    x = rng.standard_normal((6, 3))
    assert check_op(lambda t: selective_scan(t, p, method), [x]) < 1e-4


def test_recurrence_gradient_along_inner_axis(rng):
    a = rng.uniform(0.2, 0.9, (2, 5, 3))
    u = rng.standard_normal((2, 5, 3))
    assert check_op(lambda x, y: linear_recurrence(x, y, axis=1), [a, u]) < 1e-6
