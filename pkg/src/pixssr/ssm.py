"""Selective state-space scan with four-direction 2D flattening.

Continuous dynamics ``h' = A h + B x``, ``y = C h + D x`` are discretised by
zero-order hold with an input-dependent step ``delta``; ``B`` and ``C`` are
also projected from the input.  The recurrence itself is exposed through two
evaluation strategies that must agree: a plain sequential loop (the reference)
and a log-depth associative (Hillis-Steele) scan used for training.
"""
from __future__ import annotations

import enum

import numpy as np

from .tensor import (
    Module,
    Tensor,
    exp,
    make_op,
    matmul,
    mean,
    mul,
    reshape,
    softplus,
    take,
    transpose,
    tsum,
)
from .tensor.core import ShapeError

_ZOH_TAYLOR = 1e-6


class ScanDirection(enum.Enum):
    LEFT_RIGHT = "left-right"
    TOP_DOWN = "top-down"
    RIGHT_LEFT = "right-left"
    DOWN_TOP = "down-top"


def scan_order(direction: ScanDirection, h: int, w: int) -> np.ndarray:
    """Flat (row-major) pixel index visited at each sequence position."""
    grid = np.arange(h * w).reshape(h, w)
    if direction is ScanDirection.LEFT_RIGHT:
        return grid.ravel()
    if direction is ScanDirection.TOP_DOWN:
        return grid.T.ravel()
    if direction is ScanDirection.RIGHT_LEFT:
        return grid.ravel()[::-1].copy()
    if direction is ScanDirection.DOWN_TOP:
        return grid.T.ravel()[::-1].copy()
    raise ValueError(direction)


def flatten_direction(f: np.ndarray, direction: ScanDirection) -> np.ndarray:
    """``[C, H, W]`` -> ``[H*W, C]`` sequence for one direction."""
    c, h, w = f.shape
    return f.reshape(c, h * w)[:, scan_order(direction, h, w)].T


def unflatten_direction(seq: np.ndarray, direction: ScanDirection, h: int, w: int) -> np.ndarray:
    out = np.empty((seq.shape[1], h * w), dtype=seq.dtype)
    out[:, scan_order(direction, h, w)] = seq.T
    return out.reshape(seq.shape[1], h, w)


# ---------------------------------------------------------------------------
# discretisation
# ---------------------------------------------------------------------------

def _zoh_phi(z: Tensor) -> Tensor:
    """``expm1(z) / z`` with its removable singularity at 0 filled in."""
    zd = z.data
    small = np.abs(zd) < _ZOH_TAYLOR
    safe = np.where(small, 1.0, zd)
    em1 = np.expm1(safe)
    val = np.where(small, 1.0 + zd / 2.0 + zd * zd / 6.0, em1 / safe)
    deriv = np.where(small, 0.5 + zd / 3.0, (safe * (em1 + 1.0) - em1) / (safe * safe))
    return make_op(val.astype(zd.dtype, copy=False), (z,), lambda g: (g * deriv,))


def discretize(delta, a, b) -> tuple[Tensor, Tensor]:
    """Zero-order hold: ``a_bar = exp(delta a)``, ``b_bar = (exp(delta a) - 1) / a * b``.

    Operands broadcast; as ``a -> 0`` the second factor tends to ``delta * b``.
    """
    delta = delta if isinstance(delta, Tensor) else Tensor(delta)
    a = a if isinstance(a, Tensor) else Tensor(a)
    b = b if isinstance(b, Tensor) else Tensor(b)
    if np.any(delta.data <= 0):
        raise ValueError("discretize needs delta > 0")
    z = mul(delta, a)
    a_bar = exp(z)
    b_bar = mul(mul(_zoh_phi(z), delta), b)
    return a_bar, b_bar


# ---------------------------------------------------------------------------
# linear recurrence h_t = a_t * h_{t-1} + u_t, h_0 = 0, along axis 0
# ---------------------------------------------------------------------------

def _recur_naive(a: np.ndarray, u: np.ndarray) -> np.ndarray:
    h = np.empty_like(u)
    prev = np.zeros_like(u[0])
    for t in range(u.shape[0]):
        prev = a[t] * prev + u[t]
        h[t] = prev
    return h


def _recur_doubling(a: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inclusive Hillis-Steele scan under ``(a1,u1).(a2,u2) = (a1 a2, a2 u1 + u2)``."""
    a = a.copy()
    u = u.copy()
    n = u.shape[0]
    step = 1
    while step < n:
        u[step:] = a[step:] * u[:-step] + u[step:]
        a[step:] = a[step:] * a[:-step]
        step *= 2
    return u


_RECUR = {"naive": _recur_naive, "fast": _recur_doubling}


def linear_recurrence(a_bar: Tensor, u: Tensor, axis: int = 0, method: str = "fast") -> Tensor:
    """Differentiable first-order linear recurrence along ``axis``."""
    try:
        run = _RECUR[method]
    except KeyError:
        raise ValueError(f"unknown scan method {method!r}") from None
    if a_bar.shape != u.shape:
        raise ShapeError(f"recurrence operands differ: {a_bar.shape} vs {u.shape}")
    ax = axis % u.ndim
    a0 = np.moveaxis(a_bar.data, ax, 0)
    u0 = np.moveaxis(u.data, ax, 0)
    h0 = run(a0, u0)

    def backward(g):
        g0 = np.moveaxis(g, ax, 0)
        # adjoint recurrence runs backwards in time with a shifted by one step
        a_next = np.zeros_like(a0)
        a_next[:-1] = a0[1:]
        gu = run(a_next[::-1], g0[::-1])[::-1]
        h_prev = np.zeros_like(h0)
        h_prev[1:] = h0[:-1]
        ga = gu * h_prev
        return np.moveaxis(ga, 0, ax), np.moveaxis(gu, 0, ax)

    return make_op(np.moveaxis(h0, 0, ax), (a_bar, u), backward)


def ssm_core(x: Tensor, a_bar: Tensor, b_bar: Tensor, c: Tensor, d: Tensor, method: str = "naive") -> Tensor:
    """Scan with explicit discrete coefficients.

    Shapes: ``x [..., L, C]``, ``a_bar, b_bar [..., L, C, N]``,
    ``c [..., L, N]``, ``d [C]``.
    """
    u = mul(b_bar, reshape(x, x.shape + (1,)))
    h = linear_recurrence(a_bar, u, axis=-3, method=method)
    c_e = reshape(c, c.shape[:-1] + (1, c.shape[-1]))
    return tsum(mul(h, c_e), axis=-1) + mul(d, x)


# ---------------------------------------------------------------------------
# parameters and the selective scan
# ---------------------------------------------------------------------------

class SsmParams(Module):
    """Selective SSM parameters for ``channels`` input channels."""

    def __init__(self, channels: int, state: int = 8, rng: np.random.Generator | None = None,
                 dtype=np.float64, dt_min: float = 1e-3, dt_max: float = 1e-1):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.channels, self.state = channels, state
        a_init = np.tile(np.log(np.arange(1, state + 1, dtype=np.float64)), (channels, 1))
        self.a_log = Tensor(a_init.astype(dtype), requires_grad=True)
        bound = 1.0 / np.sqrt(channels)
        dt = np.exp(rng.uniform(np.log(dt_min), np.log(dt_max), size=channels))
        self.delta_w = Tensor(rng.uniform(-bound, bound, (channels, channels)).astype(dtype), requires_grad=True)
        self.delta_b = Tensor((dt + np.log(-np.expm1(-dt))).astype(dtype), requires_grad=True)
        self.b_w = Tensor(rng.uniform(-bound, bound, (channels, state)).astype(dtype), requires_grad=True)
        self.b_b = Tensor(np.zeros(state, dtype=dtype), requires_grad=True)
        self.c_w = Tensor(rng.uniform(-bound, bound, (channels, state)).astype(dtype), requires_grad=True)
        self.c_b = Tensor(np.zeros(state, dtype=dtype), requires_grad=True)
        self.d = Tensor(np.ones(channels, dtype=dtype), requires_grad=True)

    def coefficients(self, x: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        """``(a_bar, b_bar, c)`` for input ``x [..., L, C]``."""
        delta = softplus(matmul(x, self.delta_w) + self.delta_b)
        b = matmul(x, self.b_w) + self.b_b
        c = matmul(x, self.c_w) + self.c_b
        a = -exp(self.a_log)
        delta_e = reshape(delta, delta.shape + (1,))
        b_e = reshape(b, b.shape[:-1] + (1, b.shape[-1]))
        a_bar, b_bar = discretize(delta_e, a, b_e)
        return a_bar, b_bar, c


def selective_scan(x: Tensor, params: SsmParams, method: str = "naive") -> Tensor:
    """Selective scan of ``x [..., L, C]`` (sequential reference by default)."""
    if x.ndim < 2 or x.shape[-2] < 1:
        raise ShapeError(f"selective_scan expects [..., L, C] with L >= 1, got {x.shape}")
    if x.shape[-1] != params.channels:
        raise ShapeError(f"input has {x.shape[-1]} channels, SSM expects {params.channels}")
    if not np.isfinite(x.data).all():
        raise FloatingPointError("selective_scan received non-finite input")
    a_bar, b_bar, c = params.coefficients(x)
    return ssm_core(x, a_bar, b_bar, c, params.d, method=method)


def selective_scan_fast(x: Tensor, params: SsmParams) -> Tensor:
    return selective_scan(x, params, method="fast")


def multi_direction_scan(f: Tensor, params: SsmParams, method: str = "fast",
                         directions=tuple(ScanDirection)) -> Tensor:
    """Scan ``f [C, H, W]`` along each direction and average the results."""
    if f.ndim != 3:
        raise ShapeError(f"multi_direction_scan expects [C, H, W], got {f.shape}")
    c, h, w = f.shape
    n = h * w
    seq = transpose(reshape(f, (c, n)), (1, 0))
    orders = [scan_order(d, h, w) for d in directions]
    k = len(orders)
    gathered = reshape(take(seq, np.concatenate(orders), axis=0), (k, n, c))
    y = reshape(selective_scan(gathered, params, method=method), (k * n, c))
    back = np.concatenate([i * n + np.argsort(o) for i, o in enumerate(orders)])
    restored = reshape(take(y, back, axis=0), (k, n, c))
    fused = mean(restored, axis=0)
    return reshape(transpose(fused, (1, 0)), (c, h, w))


__all__ = [
    "ScanDirection",
    "SsmParams",
    "discretize",
    "flatten_direction",
    "linear_recurrence",
    "multi_direction_scan",
    "scan_order",
    "selective_scan",
    "selective_scan_fast",
    "ssm_core",
    "unflatten_direction",
]
