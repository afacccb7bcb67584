"""Training losses and evaluation metrics.

Metrics operate on numpy cubes ``[B, H, W]`` with data range 1 and accumulate
in float64.  Losses are built from tensor ops so they can be differentiated.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from . import tensor as T
from .spectra import PointSpectraSet

logger = logging.getLogger(__name__)

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2
PSNR_CAP_DB = 100.0
_PSNR_MSE_FLOOR = 1e-10
_SAM_MIN_NORM = 1e-12


@dataclass(frozen=True)
class LossWeights:
    beta1: float = 1.0
    beta2: float = 0.3
    beta3: float = 0.3

    def __post_init__(self):
        if min(self.beta1, self.beta2, self.beta3) < 0:
            raise ValueError("loss weights must be nonnegative")


@dataclass(frozen=True)
class MetricReport:
    rmse: float
    psnr: float
    ssim: float
    sam: float

    def lines(self) -> str:
        return "\n".join(f"{k}={v:.6f}" for k, v in asdict(self).items())

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


def _check_shapes(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def rmse(y_ref, y_est) -> float:
    a = np.asarray(y_ref, dtype=np.float64)
    b = np.asarray(y_est, dtype=np.float64)
    _check_shapes(a, b)
    return float(np.sqrt(np.mean((a - b) ** 2)))


def psnr(y_ref, y_est) -> float:
    """Mean over bands of ``10 log10(1 / MSE_b)``, each band capped at 100 dB."""
    a = np.asarray(y_ref, dtype=np.float64)
    b = np.asarray(y_est, dtype=np.float64)
    _check_shapes(a, b)
    if a.ndim == 2:
        a, b = a[None], b[None]
    mse = ((a - b) ** 2).reshape(a.shape[0], -1).mean(axis=1)
    per_band = np.full(mse.shape, PSNR_CAP_DB)
    ok = mse >= _PSNR_MSE_FLOOR
    per_band[ok] = np.minimum(10.0 * np.log10(1.0 / mse[ok]), PSNR_CAP_DB)
    return float(per_band.mean())


@lru_cache(maxsize=64)
def window_matrix(n: int, size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Banded ``[n - size + 1, n]`` matrix applying a normalised 1D Gaussian in 'valid' mode."""
    k = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(k**2) / (2.0 * sigma**2))
    g /= g.sum()
    m = np.zeros((n - size + 1, n))
    for i in range(n - size + 1):
        m[i, i:i + size] = g
    m.setflags(write=False)
    return m


def _ssim_map(a: np.ndarray, b: np.ndarray, size: int) -> np.ndarray:
    gh = window_matrix(a.shape[-2], size)
    gw = window_matrix(a.shape[-1], size)

    def filt(z):
        return gh @ z @ gw.T

    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a**2
    var_b = filt(b * b) - mu_b**2
    cov = filt(a * b) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2)
    den = (mu_a**2 + mu_b**2 + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return num / den


def ssim(a_band, b_band) -> float:
    """Structural similarity of two bands: 11x11 Gaussian window, sigma 1.5."""
    a = np.asarray(a_band, dtype=np.float64)
    b = np.asarray(b_band, dtype=np.float64)
    _check_shapes(a, b)
    if a.ndim != 2:
        raise ValueError(f"ssim expects 2D bands, got {a.shape}")
    if min(a.shape) < SSIM_WINDOW:
        raise ValueError(f"image {a.shape} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    return float(_ssim_map(a, b, SSIM_WINDOW).mean())


def ssim_cube(y_ref, y_est) -> float:
    a = np.asarray(y_ref, dtype=np.float64)
    b = np.asarray(y_est, dtype=np.float64)
    _check_shapes(a, b)
    return float(np.mean([ssim(a[i], b[i]) for i in range(a.shape[0])]))


def spectral_angles(y_ref, y_est) -> np.ndarray:
    """Per-pixel angle in degrees ``[H, W]``; NaN where either spectrum is degenerate.

    Uses ``2 atan2(|u - v|, |u + v|)`` on unit vectors, which stays accurate
    for nearly parallel spectra where ``arccos`` loses precision.
    """
    a = np.asarray(y_ref, dtype=np.float64)
    b = np.asarray(y_est, dtype=np.float64)
    _check_shapes(a, b)
    na = np.linalg.norm(a, axis=0)
    nb = np.linalg.norm(b, axis=0)
    valid = (na > _SAM_MIN_NORM) & (nb > _SAM_MIN_NORM)
    with np.errstate(invalid="ignore", divide="ignore"):
        ua = a / na
        ub = b / nb
        ang = 2.0 * np.arctan2(np.linalg.norm(ua - ub, axis=0), np.linalg.norm(ua + ub, axis=0))
    return np.where(valid, np.degrees(ang), np.nan)


def sam(y_ref, y_est) -> float:
    ang = spectral_angles(y_ref, y_est)
    if np.isnan(ang).all():
        raise ValueError("every pixel has a degenerate spectrum; SAM is undefined")
    return float(np.nanmean(ang))


def evaluate(y_ref, y_est) -> MetricReport:
    return MetricReport(rmse=rmse(y_ref, y_est), psnr=psnr(y_ref, y_est),
                        ssim=ssim_cube(y_ref, y_est), sam=sam(y_ref, y_est))


def error_map(y_ref, y_est) -> np.ndarray:
    """Per-pixel RMSE across bands, ``[H, W]``."""
    a = np.asarray(y_ref, dtype=np.float64)
    b = np.asarray(y_est, dtype=np.float64)
    _check_shapes(a, b)
    return np.sqrt(np.mean((a - b) ** 2, axis=0))


# ---------------------------------------------------------------------------
# differentiable losses
# ---------------------------------------------------------------------------

def loss_window(h: int, w: int) -> int:
    """SSIM window used by the loss: 11, shrunk to the largest odd size that fits."""
    size = min(SSIM_WINDOW, h, w)
    return size if size % 2 else size - 1


def ssim_tensor(a: T.Tensor, b: T.Tensor) -> T.Tensor:
    """Mean windowed SSIM over ``[..., H, W]`` (one value per leading index)."""
    h, w = a.shape[-2:]
    size = loss_window(h, w)
    gh = T.Tensor(window_matrix(h, size).astype(a.dtype))
    gwt = T.Tensor(window_matrix(w, size).T.astype(a.dtype))

    def filt(z):
        return T.matmul(T.matmul(gh, z), gwt)

    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a * mu_a
    var_b = filt(b * b) - mu_b * mu_b
    cov = filt(a * b) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2)
    den = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return T.mean(num / den, axis=(-2, -1))


def loss_phsi(y_r: T.Tensor, points: PointSpectraSet) -> T.Tensor:
    """Mean absolute error at the sampled locations only (over K*B entries)."""
    k = points.mask.count
    if k == 0:
        warnings.warn("no sampled point spectra in this patch; L_pHSI set to 0", RuntimeWarning, stacklevel=2)
        return T.Tensor(np.zeros((), dtype=y_r.dtype))
    if points.real_points is None:
        raise ValueError("L_pHSI needs real point spectra")
    rows, cols = points.mask.locations()
    picked = y_r[:, rows, cols]
    return T.mean(T.absolute(picked - T.Tensor(points.real_points.astype(y_r.dtype))))


def loss_rep(y_r: T.Tensor, x: T.Tensor, s: np.ndarray) -> T.Tensor:
    """Mean absolute error between the RGB input and the re-projected reconstruction."""
    b, h, w = y_r.shape
    proj = T.matmul(T.Tensor(s.astype(y_r.dtype)), T.reshape(y_r, (b, h * w)))
    return T.mean(T.absolute(T.reshape(x, (3, h * w)) - proj))


def loss_ssim(y_r: T.Tensor) -> T.Tensor:
    """Mean over adjacent band pairs of ``1 - SSIM``."""
    b = y_r.shape[0]
    if b < 2:
        return T.Tensor(np.zeros((), dtype=y_r.dtype))
    return T.mean(1.0 - ssim_tensor(y_r[:-1], y_r[1:]))


def loss_p2i(x: T.Tensor, rgb_from_y3: T.Tensor) -> T.Tensor:
    return T.mean(T.absolute(x - rgb_from_y3))


def loss_overall(y_r: T.Tensor, points: PointSpectraSet, x: T.Tensor, y3: T.Tensor, s: np.ndarray,
                 weights: LossWeights = LossWeights(), h2r=None) -> tuple[T.Tensor, dict[str, float]]:
    """``L_pHSI + b1 L_rep + b2 L_SSIM + b3 L_P2I``; returns the total and a float breakdown.

    ``h2r`` maps the preliminary cube ``y3`` back to RGB; when omitted the
    P2I term is dropped.
    """
    x = x if isinstance(x, T.Tensor) else T.Tensor(np.asarray(x, dtype=y_r.dtype))
    if y_r.shape[1:] != x.shape[1:]:
        raise ValueError(f"reconstruction {y_r.shape} and RGB {x.shape} disagree spatially")
    phsi = loss_phsi(y_r, points)
    rep = loss_rep(y_r, x, s)
    ss = loss_ssim(y_r)
    p2i = loss_p2i(x, h2r(y3)) if h2r is not None else T.Tensor(np.zeros((), dtype=y_r.dtype))
    total = phsi + weights.beta1 * rep + weights.beta2 * ss + weights.beta3 * p2i
    breakdown = {"total": total.item(), "phsi": phsi.item(), "rep": rep.item(),
                 "ssim": ss.item(), "p2i": p2i.item()}
    return total, breakdown


def combine(components: dict[str, float], weights: LossWeights = LossWeights()) -> float:
    return (components["phsi"] + weights.beta1 * components["rep"]
            + weights.beta2 * components["ssim"] + weights.beta3 * components["p2i"])
