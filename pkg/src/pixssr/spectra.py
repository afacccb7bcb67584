"""Synthetic point spectra drawn from a Gamma model, plus sampling masks.

At both training and inference time the network receives a Gamma field in
place of measured spectra.  During training the few locations where real
spectra exist are written into that field and supervise the output there.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GammaConfig:
    alpha: float = 2.0
    beta: float = 0.25
    clip_max: float = 1.0

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError(f"Gamma shape and scale must be positive, got alpha={self.alpha}, beta={self.beta}")
        if not self.clip_max > 0:
            raise ValueError(f"clip_max must be positive, got {self.clip_max}")

    @property
    def mean(self) -> float:
        return self.alpha * self.beta

    @property
    def variance(self) -> float:
        return self.alpha * self.beta**2


def _standard_gamma(alpha: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Marsaglia-Tsang squeeze/rejection sampler for Gamma(alpha, 1)."""
    if alpha < 1.0:
        boost = rng.random(size) ** (1.0 / alpha)
        return _standard_gamma(alpha + 1.0, size, rng) * boost
    d = alpha - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.empty(size)
    pending = np.arange(size)
    while pending.size:
        n = pending.size
        x = rng.standard_normal(n)
        u = rng.random(n)
        v = 1.0 + c * x
        positive = v > 0
        v = np.where(positive, v * v * v, 1.0)
        x2 = x * x
        squeeze = u < 1.0 - 0.0331 * x2 * x2
        with np.errstate(divide="ignore"):
            full = np.log(u) < 0.5 * x2 + d * (1.0 - v + np.log(v))
        ok = positive & (squeeze | full)
        out[pending[ok]] = d * v[ok]
        pending = pending[~ok]
    return out


def sample_gamma(shape, cfg: GammaConfig, rng: np.random.Generator, clip: bool = True) -> np.ndarray:
    """I.i.d. Gamma(alpha, scale=beta) samples, clipped to ``[0, clip_max]``."""
    shape = tuple(np.atleast_1d(shape).astype(int))
    n = int(np.prod(shape))
    draws = _standard_gamma(cfg.alpha, n, rng) * cfg.beta
    if clip:
        draws = np.clip(draws, 0.0, cfg.clip_max)
    return draws.reshape(shape)


def sample_gaussian(shape, cfg: GammaConfig, rng: np.random.Generator, clip: bool = True) -> np.ndarray:
    """Normal field matched to the Gamma config's mean and variance (ablation baseline)."""
    draws = rng.normal(cfg.mean, np.sqrt(cfg.variance), size=tuple(shape))
    if clip:
        draws = np.clip(draws, 0.0, cfg.clip_max)
    return draws


SPECTRA_MODELS = {"gamma": sample_gamma, "gaussian": sample_gaussian}


@dataclass(frozen=True)
class PointMask:
    grid: np.ndarray  # bool [H, W], True at sampled locations
    omega: float
    seed: int | None = None

    @property
    def count(self) -> int:
        return int(self.grid.sum())

    def locations(self) -> tuple[np.ndarray, np.ndarray]:
        """Row and column indices of sampled points in row-major order."""
        return np.nonzero(self.grid)


def point_count(h: int, w: int, omega: float) -> int:
    # guard the float product against representation error (0.1 * 16384)
    return int(np.floor(omega * h * w + 1e-9))


def make_mask(h: int, w: int, omega: float, rng: np.random.Generator | int) -> PointMask:
    """Choose ``floor(omega * H * W)`` distinct pixels uniformly."""
    if not 0.0 <= omega <= 1.0:
        raise ValueError(f"omega must lie in [0, 1], got {omega}")
    seed = None
    if not isinstance(rng, np.random.Generator):
        seed = int(rng)
        rng = np.random.default_rng(seed)
    k = point_count(h, w, omega)
    grid = np.zeros(h * w, dtype=bool)
    if k:
        grid[rng.choice(h * w, size=k, replace=False)] = True
    return PointMask(grid.reshape(h, w), omega, seed)


@dataclass
class PointSpectraSet:
    gamma_field: np.ndarray  # [B, H, W]
    mask: PointMask
    real_points: np.ndarray | None = None  # [B, K]

    def __post_init__(self):
        if self.real_points is not None and self.real_points.shape[1] != self.mask.count:
            raise ValueError(
                f"real_points carries {self.real_points.shape[1]} spectra but the mask has {self.mask.count} points")


def gather_points(cube: np.ndarray, mask: PointMask) -> np.ndarray:
    rows, cols = mask.locations()
    return cube[:, rows, cols]


def compose_input(points: PointSpectraSet, mode: str) -> np.ndarray:
    """Network spectral input: the Gamma field, with real spectra inserted when training."""
    if mode == "infer":
        return points.gamma_field.copy()
    if mode != "train":
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    if points.real_points is None:
        raise ValueError("train mode needs real point spectra")
    out = points.gamma_field.copy()
    rows, cols = points.mask.locations()
    out[:, rows, cols] = points.real_points
    return out


def masked_l1_target(points: PointSpectraSet) -> tuple[np.ndarray, tuple[np.ndarray, np.ndarray]]:
    """Ground-truth spectra ``[B, K]`` and their ``(rows, cols)``."""
    if points.real_points is None:
        raise ValueError("no real point spectra available")
    return points.real_points, points.mask.locations()


def draw_point_set(cube: np.ndarray | None, shape, omega: float, cfg: GammaConfig,
                   rng: np.random.Generator, model: str = "gamma") -> PointSpectraSet:
    """Field + mask (+ real spectra from ``cube`` when given) for one patch."""
    b, h, w = shape
    field = SPECTRA_MODELS[model]((b, h, w), cfg, rng)
    mask = make_mask(h, w, omega, rng)
    real = gather_points(cube, mask) if cube is not None else None
    return PointSpectraSet(field, mask, real)
