import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pixssr import tensor as T
from pixssr.frft import build_plan, dft_matrix, frft_1d, frft_2d, frft_2d_array, frft_backward, ifrft_2d

from _gradcheck import check_op

SIZES = [2, 3, 4, 5, 8, 16, 33, 64]


def _cvec(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def _zero_crossings(v):
    s = np.sign(v[np.abs(v) > 1e-9])
    return int(np.sum(s[1:] != s[:-1]))


@pytest.mark.parametrize("n", SIZES)
def test_basis_orthonormal(n):
    v = build_plan(n).basis
    np.testing.assert_allclose(v.T @ v, np.eye(n), atol=1e-12)


@pytest.mark.parametrize("n", [4, 7, 8, 33])
def test_branches_follow_parity_convention(n):
    expected = list(range(n - 1)) + [n] if n % 2 == 0 else list(range(n))
    assert sorted(build_plan(n).branches.tolist()) == expected


@pytest.mark.parametrize("n", [8, 16, 33])
def test_low_order_vectors_are_hermite_like(n):
    # the first few basis vectors alternate in parity and gain oscillations
    plan = build_plan(n)
    crossings = [_zero_crossings(np.roll(plan.basis[:, k], n // 2)) for k in range(4)]
    assert crossings == sorted(crossings)
    for k in range(4):
        col = plan.basis[:, k]
        mirrored = col[(-np.arange(n)) % n]
        np.testing.assert_allclose(mirrored, (-1) ** k * col, atol=1e-10)


@pytest.mark.parametrize("n", SIZES)
def test_order_one_is_unitary_dft(n):
    np.testing.assert_allclose(build_plan(n).matrix(1.0), dft_matrix(n), atol=1e-10)


def test_order_one_on_impulse():
    e0 = np.zeros(4, complex)
    e0[0] = 1
    np.testing.assert_allclose(frft_1d(build_plan(4), 1.0, e0), 0.5 * np.ones(4), atol=1e-12)


@pytest.mark.parametrize("n", SIZES)
def test_order_zero_is_identity(n):
    np.testing.assert_allclose(build_plan(n).matrix(0.0), np.eye(n), atol=1e-12)


@pytest.mark.parametrize("n", SIZES)
def test_order_two_is_parity(n, rng):
    x = _cvec(rng, n)
    f2 = dft_matrix(n) @ dft_matrix(n)
    np.testing.assert_allclose(frft_1d(build_plan(n), 2.0, x), f2 @ x, atol=1e-10)
    np.testing.assert_allclose(frft_1d(build_plan(n), 2.0, x), x[(-np.arange(n)) % n], atol=1e-10)


@given(st.sampled_from(SIZES), st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**31))
def test_additivity(n, a, b, seed):
    x = _cvec(np.random.default_rng(seed), n)
    plan = build_plan(n)
    lhs = frft_1d(plan, a, frft_1d(plan, b, x))
    assert np.max(np.abs(lhs - frft_1d(plan, a + b, x))) < 1e-8


@given(st.sampled_from(SIZES), st.floats(-4, 4), st.integers(0, 2**31))
def test_unitarity(n, a, seed):
    x = _cvec(np.random.default_rng(seed), n)
    ratio = np.linalg.norm(frft_1d(build_plan(n), a, x)) / np.linalg.norm(x)
    assert abs(ratio - 1) < 1e-10


def test_inverse_is_negative_order(rng):
    x = _cvec(rng, 12)
    plan = build_plan(12)
    np.testing.assert_allclose(frft_1d(plan, -0.37, frft_1d(plan, 0.37, x)), x, atol=1e-12)


def test_plan_cached_and_read_only():
    assert build_plan(9) is build_plan(9)
    with pytest.raises(ValueError):
        build_plan(9).basis[0, 0] = 1.0
    with pytest.raises(ValueError):
        build_plan(9).matrix(0.5)[0, 0] = 1.0


@pytest.mark.parametrize("n", [0, 1])
def test_plan_rejects_short(n):
    with pytest.raises(ValueError):
        build_plan(n)


def test_length_mismatch(rng):
    with pytest.raises(T.ShapeError):
        frft_1d(build_plan(4), 0.5, _cvec(rng, 5))


# -- 2D --------------------------------------------------------------------------

def test_2d_row_column_order_commutes(rng):
    z = _cvec(rng, 3, 6, 9)
    mh, mw = build_plan(6).matrix(0.6), build_plan(9).matrix(0.6)
    rows_first = (z @ mw.T)
    cols_first = mh @ z
    assert np.max(np.abs(mh @ rows_first - cols_first @ mw.T)) < 1e-10


def test_2d_preserves_norm_and_round_trips(rng):
    z = _cvec(rng, 2, 8, 8)
    out = frft_2d_array(z, 0.5)
    assert abs(np.linalg.norm(out) - np.linalg.norm(z)) < 1e-10
    np.testing.assert_allclose(frft_2d_array(out, -0.5), z, atol=1e-9)


def test_2d_tensor_matches_array_path(rng):
    z = _cvec(rng, 2, 5, 6)
    pair = np.stack([z.real, z.imag], axis=-1)
    out = frft_2d(T.Tensor(pair), 0.3).data
    np.testing.assert_allclose(out[..., 0] + 1j * out[..., 1], frft_2d_array(z, 0.3), atol=1e-13)
    back = ifrft_2d(frft_2d(T.Tensor(pair), 0.3), 0.3).data
    np.testing.assert_allclose(back, pair, atol=1e-12)


def test_2d_rejects_bad_shapes():
    with pytest.raises(T.ShapeError):
        frft_2d(T.Tensor(np.zeros((2, 4, 4))))
    with pytest.raises(T.ShapeError):
        frft_2d(T.Tensor(np.zeros((2, 1, 4, 2))))


# -- backward ----------------------------------------------------------------------

def test_adjoint_identity(rng):
    x, y = _cvec(rng, 7, 5), _cvec(rng, 7, 5)
    lhs = np.vdot(y, frft_2d_array(x, 0.8))
    rhs = np.vdot(frft_backward(y, 0.8), x)
    assert abs(lhs - rhs) < 1e-10


def test_backward_at_order_zero_passes_through(rng):
    g = _cvec(rng, 4, 6)
    np.testing.assert_allclose(frft_backward(g, 0.0), g, atol=1e-12)


@pytest.mark.parametrize("a", [0.25, 0.5, 1.3])
def test_gradient_of_real_sum(a, rng):
    x = rng.standard_normal((1, 4, 5, 2))
    err = check_op(lambda t: T.tsum(T.real_part(frft_2d(t, a))), [x])
    assert err < 1e-5
