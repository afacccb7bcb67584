"""Spatial operators on channel-first feature maps ``[C, H, W]``."""
from __future__ import annotations

import numpy as np

from .core import ShapeError, Tensor, as_tensor, make_op


def _im2col(xp: np.ndarray, stride: int, ho: int, wo: int) -> np.ndarray:
    c = xp.shape[0]
    cols = np.empty((c, 3, 3, ho, wo), dtype=xp.dtype)
    for di in range(3):
        for dj in range(3):
            cols[:, di, dj] = xp[:, di:di + stride * (ho - 1) + 1:stride,
                                 dj:dj + stride * (wo - 1) + 1:stride]
    return cols.reshape(c * 9, ho * wo)


def conv3x3(x: Tensor, w: Tensor, bias: Tensor | None = None, stride: int = 1) -> Tensor:
    """3x3 cross-correlation with zero padding 1.

    With ``stride=1`` the spatial size is preserved; ``stride=2`` halves it
    (rounding up).
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 3:
        raise ShapeError(f"conv3x3 expects [C, H, W], got {x.shape}")
    if w.ndim != 4 or w.shape[2:] != (3, 3):
        raise ShapeError(f"conv3x3 weight must be [C_out, C_in, 3, 3], got {w.shape}")
    c_in, h, wd = x.shape
    c_out = w.shape[0]
    if w.shape[1] != c_in:
        raise ShapeError(f"conv3x3 channel mismatch: input {x.shape} vs weight {w.shape}")
    ho, wo = (h - 1) // stride + 1, (wd - 1) // stride + 1
    xp = np.pad(x.data, ((0, 0), (1, 1), (1, 1)))
    cols = _im2col(xp, stride, ho, wo)
    w2 = w.data.reshape(c_out, c_in * 9)
    out = w2 @ cols
    parents = [x, w]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (c_out,):
            raise ShapeError(f"conv3x3 bias must be ({c_out},), got {bias.shape}")
        out = out + bias.data[:, None]
        parents.append(bias)
    out = out.reshape(c_out, ho, wo)

    def backward(g):
        g2 = g.reshape(c_out, ho * wo)
        gw = (g2 @ cols.T).reshape(w.shape)
        gcols = (w2.T @ g2).reshape(c_in, 3, 3, ho, wo)
        gxp = np.zeros_like(xp)
        for di in range(3):
            for dj in range(3):
                gxp[:, di:di + stride * (ho - 1) + 1:stride,
                    dj:dj + stride * (wo - 1) + 1:stride] += gcols[:, di, dj]
        grads = [gxp[:, 1:-1, 1:-1], gw]
        if bias is not None:
            grads.append(g2.sum(axis=1))
        return tuple(grads)

    return make_op(out, parents, backward)


def avgpool2(x: Tensor) -> Tensor:
    """Mean over non-overlapping 2x2 blocks; a trailing odd row/column is dropped."""
    x = as_tensor(x)
    c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    if h2 == 0 or w2 == 0:
        raise ShapeError(f"avgpool2 needs H, W >= 2, got {x.shape}")
    xd = x.data[:, : 2 * h2, : 2 * w2]
    out = xd.reshape(c, h2, 2, w2, 2).mean(axis=(2, 4))

    def backward(g):
        full = np.zeros_like(x.data)
        full[:, : 2 * h2, : 2 * w2] = np.repeat(np.repeat(g, 2, axis=1), 2, axis=2) * 0.25
        return (full,)

    return make_op(out, (x,), backward)


def upsample2(x: Tensor, size: tuple[int, int] | None = None) -> Tensor:
    """Nearest-neighbour 2x upsampling.

    When ``size`` exceeds ``2H x 2W`` (odd source before pooling) the last
    row/column is edge-replicated to reach it.
    """
    x = as_tensor(x)
    c, h, w = x.shape
    ho, wo = size if size is not None else (2 * h, 2 * w)
    rows = np.minimum(np.arange(ho) // 2, h - 1)
    cols = np.minimum(np.arange(wo) // 2, w - 1)
    out = x.data[:, rows[:, None], cols[None, :]]

    def backward(g):
        acc = np.zeros((c, h, wo), dtype=g.dtype)
        np.add.at(acc, (slice(None), rows), g)
        res = np.zeros_like(x.data)
        np.add.at(res, (slice(None), slice(None), cols), acc)
        return (res,)

    return make_op(out, (x,), backward)


# ---------------------------------------------------------------------------
# complex values as (real, imag) pairs on a trailing axis
# ---------------------------------------------------------------------------

def complex_lift(x: Tensor) -> Tensor:
    """Real tensor -> complex pair tensor with zero imaginary part."""
    x = as_tensor(x)
    out = np.stack([x.data, np.zeros_like(x.data)], axis=-1)
    return make_op(out, (x,), lambda g: (g[..., 0],))


def real_part(z: Tensor) -> Tensor:
    zd = z.data

    def backward(g):
        out = np.zeros_like(zd)
        out[..., 0] = g
        return (out,)

    return make_op(zd[..., 0], (z,), backward)


def to_complex(z: Tensor) -> np.ndarray:
    """View a pair tensor (or pair ndarray) as a numpy complex array."""
    zd = z.data if isinstance(z, Tensor) else z
    return zd[..., 0] + 1j * zd[..., 1]


def from_complex(arr: np.ndarray, dtype=np.float64) -> np.ndarray:
    return np.stack([arr.real, arr.imag], axis=-1).astype(dtype, copy=False)
