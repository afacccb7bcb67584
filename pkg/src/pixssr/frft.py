"""Discrete fractional Fourier transform via the DFT-commuting eigenbasis.

The transform of order ``a`` is ``V diag(exp(-i pi a k / 2)) V^T`` where the
columns of ``V`` are Hermite-like eigenvectors of the tridiagonal matrix that
commutes with the unitary DFT.  Because ``V`` is orthogonal the result is
unitary for every real order and ``F^a F^b = F^(a+b)`` holds exactly up to
rounding.  Order 1 is the unitary DFT ``exp(-2 pi i m n / N) / sqrt(N)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .tensor import Tensor, make_op
from .tensor.core import ShapeError

DEFAULT_ORDER = 0.5


@dataclass(frozen=True)
class FrftPlan:
    n: int
    basis: np.ndarray  # [N, N], columns ordered by Hermite index
    branches: np.ndarray  # [N] integer eigenvalue branch per column

    def matrix(self, a: float) -> np.ndarray:
        """Dense complex transform matrix of order ``a``."""
        return _matrix(self.n, float(a))


def _commuting_matrix(n: int) -> np.ndarray:
    idx = np.arange(n)
    s = np.diag(2.0 * np.cos(2.0 * np.pi * idx / n) - 4.0)
    s += np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)
    s[0, n - 1] += 1.0
    s[n - 1, 0] += 1.0
    return s


def _parity_split(n: int) -> np.ndarray:
    """Orthogonal P mapping onto even (first r+1 rows) and odd subspaces."""
    r = n // 2
    even = n % 2 == 0
    p = np.zeros((n, n))
    p[0, 0] = 1.0
    h = 1.0 / np.sqrt(2.0)
    for i in range(1, r - even + 1):
        p[i, i] = h
        p[i, n - i] = h
    if even:
        p[r, r] = 1.0
    for i in range(r + 1, n):
        p[i, i] = -h
        p[i, n - i] = h
    return p


@lru_cache(maxsize=None)
def build_plan(n: int) -> FrftPlan:
    """Eigenbasis of the DFT-commuting matrix for signals of length ``n``."""
    if n < 2:
        raise ValueError(f"FRFT length must be >= 2, got {n}")
    s = _commuting_matrix(n)
    p = _parity_split(n)
    r = n // 2
    cs = p @ s @ p.T
    ev_c, vec_c = np.linalg.eigh(cs[: r + 1, : r + 1])
    ev_s, vec_s = np.linalg.eigh(cs[r + 1:, r + 1:])
    # descending eigenvalue == ascending Hermite order
    vec_c = vec_c[:, np.argsort(-ev_c, kind="stable")]
    vec_s = vec_s[:, np.argsort(-ev_s, kind="stable")]
    even_vecs = p.T @ np.vstack([vec_c, np.zeros((n - r - 1, r + 1))])
    odd_vecs = p.T @ np.vstack([np.zeros((r + 1, n - r - 1)), vec_s])

    n_even, n_odd = even_vecs.shape[1], odd_vecs.shape[1]
    even_orders = 2 * np.arange(n_even)
    odd_orders = 2 * np.arange(n_odd) + 1
    if n % 2 == 0:
        # the top even vector takes order N instead of N-1
        even_orders[-1] = n
    basis = np.hstack([even_vecs, odd_vecs])
    branches = np.concatenate([even_orders, odd_orders])
    order = np.argsort(branches, kind="stable")
    basis = np.ascontiguousarray(basis[:, order])
    branches = branches[order]
    basis.setflags(write=False)
    branches.setflags(write=False)
    return FrftPlan(n=n, basis=basis, branches=branches)


@lru_cache(maxsize=256)
def _matrix(n: int, a: float) -> np.ndarray:
    plan = build_plan(n)
    phase = np.exp(-1j * np.pi * a * plan.branches / 2.0)
    m = (plan.basis * phase) @ plan.basis.T
    m.setflags(write=False)
    return m


def frft_1d(plan: FrftPlan, a: float, x: np.ndarray) -> np.ndarray:
    """Order-``a`` transform of a complex vector (numpy, no tape)."""
    x = np.asarray(x)
    if x.shape[-1] != plan.n:
        raise ShapeError(f"signal length {x.shape[-1]} does not match plan length {plan.n}")
    return x @ plan.matrix(a).T


def frft_2d_array(z: np.ndarray, a: float) -> np.ndarray:
    """Separable transform of complex ``[..., H, W]``: rows, then columns."""
    h, w = z.shape[-2:]
    mh = build_plan(h).matrix(a)
    mw = build_plan(w).matrix(a)
    return mh @ (z @ mw.T)


def frft_2d(x: Tensor, a: float = DEFAULT_ORDER) -> Tensor:
    """Separable FRFT of a complex-pair tensor ``[C, H, W, 2]``.

    The backward rule applies the order ``-a`` transform to the upstream
    gradient, the adjoint of this unitary map.
    """
    if x.ndim < 3 or x.shape[-1] != 2:
        raise ShapeError(f"frft_2d expects complex pairs [..., H, W, 2], got {x.shape}")
    if x.shape[-2] < 2 or x.shape[-3] < 2:
        raise ShapeError(f"frft_2d needs H, W >= 2, got {x.shape}")
    dtype = x.dtype
    z = x.data[..., 0] + 1j * x.data[..., 1]
    out = frft_2d_array(z, a)

    def backward(g):
        gz = frft_backward(g[..., 0] + 1j * g[..., 1], a)
        return (np.stack([gz.real, gz.imag], axis=-1).astype(dtype, copy=False),)

    return make_op(np.stack([out.real, out.imag], axis=-1).astype(dtype, copy=False), (x,), backward)


def ifrft_2d(x: Tensor, a: float = DEFAULT_ORDER) -> Tensor:
    return frft_2d(x, -a)


def frft_backward(upstream: np.ndarray, a: float) -> np.ndarray:
    """Input gradient of the order-``a`` 2D transform (complex convention)."""
    return frft_2d_array(upstream, -a)


def dft_matrix(n: int) -> np.ndarray:
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)
