"""Binary checkpoint format.

Little-endian layout::

    b"PSSR" | u32 version
    u32 blob length | config blob (UTF-8 ``key=value`` lines)
    u32 parameter record count | records
    u32 optimizer record count | records
    u64 RNG seed

    record = u32 name length | name (UTF-8) | u32 rank | u32 dims[rank] | float32 payload
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .data import atomic_write_bytes
from .network import PixelSSR, build_model
from .tensor import OptimizerState

MAGIC = b"PSSR"
VERSION = 1
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: dict[str, str]
    params: dict[str, np.ndarray]
    optimizer: dict[str, np.ndarray] = field(default_factory=dict)
    seed: int = 0

    @property
    def run_config(self) -> RunConfig:
        return RunConfig.from_mapping({k: v for k, v in self.config.items() if k not in ("config_hash",)})

    @property
    def config_hash(self) -> str:
        return self.config.get("config_hash", "")


def _pack_records(records: dict[str, np.ndarray]) -> bytes:
    out = [_U32.pack(len(records))]
    for name, arr in records.items():
        raw = name.encode("utf-8")
        arr = np.asarray(arr)
        out.append(_U32.pack(len(raw)) + raw + _U32.pack(arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, raw: bytes):
        self.raw, self.pos = raw, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise CheckpointError(f"truncated checkpoint at byte {self.pos} (need {n} more)")
        chunk = self.raw[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    def records(self) -> dict[str, np.ndarray]:
        out = {}
        for _ in range(self.u32()):
            name = self.take(self.u32()).decode("utf-8")
            rank = self.u32()
            dims = struct.unpack(f"<{rank}I", self.take(4 * rank))
            count = int(np.prod(dims, dtype=np.int64))
            out[name] = np.frombuffer(self.take(4 * count), dtype="<f4").reshape(dims).copy()
        return out


def encode(ckpt: Checkpoint) -> bytes:
    blob = "".join(f"{k}={v}\n" for k, v in ckpt.config.items()).encode("utf-8")
    return b"".join([MAGIC, _U32.pack(VERSION), _U32.pack(len(blob)), blob,
                     _pack_records(ckpt.params), _pack_records(ckpt.optimizer), _U64.pack(ckpt.seed)])


def decode(raw: bytes) -> Checkpoint:
    r = _Reader(raw)
    if r.take(4) != MAGIC:
        raise CheckpointError("bad magic: not a PSSR checkpoint")
    version = r.u32()
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    config = {}
    for line in r.take(r.u32()).decode("utf-8").splitlines():
        key, _, value = line.partition("=")
        config[key] = value
    params = r.records()
    optimizer = r.records()
    seed = _U64.unpack(r.take(8))[0]
    return Checkpoint(config, params, optimizer, seed)


def snapshot(model: PixelSSR, cfg: RunConfig, opt: OptimizerState | None = None) -> Checkpoint:
    config = {k: v.strip() for k, _, v in (line.partition(" = ") for line in cfg.to_text().splitlines())}
    config["config_hash"] = cfg.config_hash()
    config["backbone"] = model.backbone.name
    params = {name: p.data for name, p in model.named_parameters()}
    optimizer: dict[str, np.ndarray] = {}
    if opt is not None:
        optimizer["t"] = np.asarray(opt.t, dtype=np.float64)
        for name in params:
            if name in opt.m:
                optimizer[f"m/{name}"] = opt.m[name]
                optimizer[f"v/{name}"] = opt.v[name]
    return Checkpoint(config, params, optimizer, cfg.seed)


def save(path, model: PixelSSR, cfg: RunConfig, opt: OptimizerState | None = None) -> None:
    atomic_write_bytes(path, encode(snapshot(model, cfg, opt)))


def load(path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return decode(path.read_bytes())


def restore_model(ckpt: Checkpoint) -> PixelSSR:
    """Rebuild the model from the checkpoint's own config and load its weights."""
    cfg = ckpt.run_config
    model = build_model(cfg.model)
    own = dict(model.named_parameters())
    if set(own) != set(ckpt.params):
        missing = sorted(set(own) ^ set(ckpt.params))[:5]
        raise CheckpointError(f"parameter names differ from the architecture: {missing}")
    for name, p in own.items():
        if p.shape != ckpt.params[name].shape:
            raise CheckpointError(f"{name}: checkpoint shape {ckpt.params[name].shape} != model {p.shape}")
        p.data = ckpt.params[name].astype(p.dtype)
    return model
