"""Flat ``key = value`` run configuration."""
from __future__ import annotations

import hashlib
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .network import ModelConfig
from .objectives import LossWeights
from .spectra import GammaConfig

SEED_ENV = "PIXSSR_SEED"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # model
    bands: int = 8
    b_feat: int = 8
    n_blocks: int = 3
    n_heads: int = 1
    d_state: int = 8
    frft_order: float = 0.5
    backbone: str = "dypro"
    block_norm: bool = False
    scan_impl: str = "fast"
    dtype: str = "float64"
    # point-spectra model
    gamma_alpha: float = 2.0
    gamma_beta: float = 0.25
    gamma_clip: float = 1.0
    spectra_model: str = "gamma"
    fixed_field: bool = False  # reuse one field per training cube instead of redrawing each step
    # loss weights
    loss_beta1: float = 1.0
    loss_beta2: float = 0.3
    loss_beta3: float = 0.3
    # optimisation
    steps: int = 200
    batch_size: int = 1
    patch_size: int = 16
    omega: float = 0.01
    lr0: float = 2e-4
    decay_power: float = 1.5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.99
    eval_interval: int = 100
    smoothing: int = 10
    # data synthesis
    n_train: int = 8
    n_val: int = 2
    cube_size: int = 16
    # io
    data_dir: str = "data"
    out_dir: str = "runs"
    seed: int = 0

    def __post_init__(self):
        for key in ("steps", "batch_size", "patch_size", "eval_interval", "smoothing", "cube_size"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be positive, got {getattr(self, key)}")
        if self.n_train < 0 or self.n_val < 0:
            raise ConfigError("cube counts must be nonnegative")
        if not 0.0 <= self.omega <= 1.0:
            raise ConfigError(f"omega must lie in [0, 1], got {self.omega}")
        if self.spectra_model not in ("gamma", "gaussian"):
            raise ConfigError(f"spectra_model must be gamma or gaussian, got {self.spectra_model!r}")
        if self.lr0 <= 0:
            raise ConfigError("lr0 must be positive")
        try:
            self.model
            self.gamma
            self.weights
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    # -- views -------------------------------------------------------------
    @property
    def model(self) -> ModelConfig:
        return ModelConfig(bands=self.bands, b_feat=self.b_feat, n_blocks=self.n_blocks, n_heads=self.n_heads,
                           d_state=self.d_state, frft_order=self.frft_order, backbone=self.backbone,
                           block_norm=self.block_norm, scan_impl=self.scan_impl, dtype=self.dtype, seed=self.seed)

    @property
    def gamma(self) -> GammaConfig:
        return GammaConfig(self.gamma_alpha, self.gamma_beta, self.gamma_clip)

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.loss_beta1, self.loss_beta2, self.loss_beta3)

    def config_hash(self) -> str:
        return self.model.arch_hash()

    def with_overrides(self, **kw) -> "RunConfig":
        return replace(self, **kw)

    # -- text form ---------------------------------------------------------
    def to_text(self) -> str:
        return "".join(f"{k} = {_format(v)}\n" for k, v in asdict(self).items())

    @classmethod
    def from_text(cls, text: str, apply_env: bool = True) -> "RunConfig":
        types = {f.name: f.type for f in fields(cls)}
        values: dict = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep or not key:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
            if key not in types:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            values[key] = _parse(types[key], value, key)
        if apply_env and os.environ.get(SEED_ENV):
            values["seed"] = _parse("int", os.environ[SEED_ENV], SEED_ENV)
        return cls(**values)

    @classmethod
    def load(cls, path, apply_env: bool = True) -> "RunConfig":
        try:
            text = Path(path).read_bytes().decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ConfigError(f"{path}: not valid UTF-8") from exc
        return cls.from_text(text, apply_env)

    @classmethod
    def from_mapping(cls, values: dict) -> "RunConfig":
        types = {f.name: f.type for f in fields(cls)}
        return cls(**{k: _parse(types[k], v, k) if isinstance(v, str) else v
                      for k, v in values.items() if k in types})

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(kind: str, value: str, key: str):
    try:
        if kind == "bool":
            low = value.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return low in ("true", "1", "yes")
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {value!r} as {kind}") from exc
    return value
