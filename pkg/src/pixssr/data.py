"""Synthetic hyperspectral cubes, RGB projection, patches and the cube file format.

Cube files are little-endian::

    b"HSIC" | u32 version (1) | u32 B | u32 H | u32 W | B*H*W float32, band-major
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CUBE_MAGIC = b"HSIC"
CUBE_VERSION = 1
_HEADER = struct.Struct("<4sIIII")
# refuse headers describing more than 2**31 values
_MAX_VALUES = 1 << 31


class CubeFormatError(ValueError):
    """Base class for unreadable cube files."""


class BadMagicError(CubeFormatError):
    pass


class TruncatedPayloadError(CubeFormatError):
    pass


class DimensionOverflowError(CubeFormatError):
    pass


class UnsupportedVersionError(CubeFormatError):
    pass


@dataclass
class HsiCube:
    values: np.ndarray  # float32 [B, H, W]

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float32)
        if self.values.ndim != 3 or self.values.shape[0] < 1:
            raise ValueError(f"cube must be [B, H, W] with B >= 1, got {self.values.shape}")

    @property
    def bands(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]


# ---------------------------------------------------------------------------
# synthesis
# ---------------------------------------------------------------------------

def synth_cube(seed: int, h: int, w: int, b: int, n_bumps: int = 6, n_modes: int = 2) -> HsiCube:
    """Smooth, nonnegative, right-skewed and band-correlated test cube.

    A sum of Gaussian spatial bumps, each carrying its own spectral signature
    (a mixture of squared Gaussians over the band index), rescaled to [0, 1].
    """
    if h < 8 or w < 8:
        raise ValueError(f"synthetic cubes need H, W >= 8, got {h}x{w}")
    if b < 3:
        raise ValueError(f"synthetic cubes need at least 3 bands, got {b}")
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    bands = np.arange(b, dtype=np.float64)
    cube = np.zeros((b, h, w))
    for _ in range(n_bumps):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        sy, sx = rng.uniform(0.12, 0.35) * h, rng.uniform(0.12, 0.35) * w
        amp = rng.uniform(0.3, 1.0)
        spatial = amp * np.exp(-0.5 * (((yy - cy) / sy) ** 2 + ((xx - cx) / sx) ** 2))
        signature = np.full(b, 0.05)
        for _ in range(n_modes):
            mu = rng.uniform(-0.1, 1.1) * (b - 1)
            width = rng.uniform(0.15, 0.45) * b
            signature += rng.uniform(0.2, 1.0) * np.exp(-0.5 * ((bands - mu) / width) ** 2) ** 2
        cube += signature[:, None, None] * spatial[None]
    cube /= cube.max()
    return HsiCube(cube)


def default_response(b: int) -> np.ndarray:
    """Three Gaussian camera curves at band fractions 0.2 / 0.5 / 0.8, rows summing to 1."""
    bands = np.arange(b, dtype=np.float64)
    centers = np.array([0.2, 0.5, 0.8]) * (b - 1)
    width = 0.15 * b
    s = np.exp(-0.5 * ((bands[None, :] - centers[:, None]) / width) ** 2)
    return s / s.sum(axis=1, keepdims=True)


def project_rgb(cube, s: np.ndarray) -> np.ndarray:
    """Per-pixel ``S @ spectrum``: ``[B, H, W] -> [3, H, W]``."""
    values = cube.values if isinstance(cube, HsiCube) else np.asarray(cube)
    if s.shape[1] != values.shape[0]:
        raise ValueError(f"response has {s.shape[1]} columns but the cube has {values.shape[0]} bands")
    return np.tensordot(s, values.astype(np.float64), axes=(1, 0))


def crop_patches(cube, size: int, stride: int) -> list[tuple[tuple[int, int], np.ndarray]]:
    """Regular grid of ``size x size`` patches; the last row/column is shifted to touch the border."""
    values = cube.values if isinstance(cube, HsiCube) else np.asarray(cube)
    _, h, w = values.shape
    if size > min(h, w):
        raise ValueError(f"patch size {size} exceeds cube extent {h}x{w}")
    if stride < 1:
        raise ValueError("stride must be positive")
    return [((i, j), values[:, i:i + size, j:j + size])
            for i in _grid_origins(h, size, stride) for j in _grid_origins(w, size, stride)]


def _grid_origins(n: int, size: int, stride: int) -> list[int]:
    origins = list(range(0, n - size + 1, stride))
    if origins[-1] != n - size:
        origins.append(n - size)
    return origins


# ---------------------------------------------------------------------------
# cube file format
# ---------------------------------------------------------------------------

def encode_cube(cube: HsiCube) -> bytes:
    b, h, w = cube.values.shape
    return _HEADER.pack(CUBE_MAGIC, CUBE_VERSION, b, h, w) + cube.values.astype("<f4").tobytes()


def decode_cube(raw: bytes) -> HsiCube:
    if len(raw) < 4 or raw[:4] != CUBE_MAGIC:
        raise BadMagicError("bad magic: not an HSIC cube file")
    if len(raw) < _HEADER.size:
        raise TruncatedPayloadError("truncated payload: header is incomplete")
    _, version, b, h, w = _HEADER.unpack_from(raw)
    if version != CUBE_VERSION:
        raise UnsupportedVersionError(f"unsupported cube format version {version}")
    count = b * h * w
    if b == 0 or h == 0 or w == 0 or count >= _MAX_VALUES:
        raise DimensionOverflowError(f"dimension overflow: {b}x{h}x{w}")
    need = _HEADER.size + 4 * count
    if len(raw) < need:
        raise TruncatedPayloadError(f"truncated payload: expected {need} bytes, found {len(raw)}")
    values = np.frombuffer(raw, dtype="<f4", count=count, offset=_HEADER.size)
    return HsiCube(values.reshape(b, h, w).astype(np.float32))


def write_cube(path, cube: HsiCube) -> None:
    Path(path).write_bytes(encode_cube(cube))


def read_cube(path) -> HsiCube:
    return decode_cube(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# response CSV and manifest
# ---------------------------------------------------------------------------

def write_response(path, s: np.ndarray) -> None:
    np.savetxt(path, s, delimiter=",", fmt="%.17g")


def read_response(path) -> np.ndarray:
    s = np.loadtxt(path, delimiter=",", ndmin=2)
    if s.shape[0] != 3:
        raise ValueError(f"response file must have 3 rows, found {s.shape[0]}")
    return s


@dataclass
class DatasetManifest:
    entries: list[tuple[str, str]] = field(default_factory=list)  # (split, path)
    seed: int = 0
    patch_size: int = 16
    omegas: tuple[float, ...] = ()
    root: Path = Path(".")

    def paths(self, split: str) -> list[Path]:
        return [self.root / p for s, p in self.entries if s == split]

    def validate(self) -> None:
        seen: dict[str, str] = {}
        for split, p in self.entries:
            if p in seen and seen[p] != split:
                raise ValueError(f"{p} appears in both {seen[p]} and {split}")
            seen[p] = split
            if not (self.root / p).exists():
                raise FileNotFoundError(self.root / p)


def write_manifest(path, manifest: DatasetManifest) -> None:
    lines = [f"# seed={manifest.seed}", f"# patch_size={manifest.patch_size}",
             "# omegas=" + ",".join(repr(o) for o in manifest.omegas)]
    lines += [f"{split}\t{p}" for split, p in manifest.entries]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    m = DatasetManifest(root=path.parent)
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            if key == "seed":
                m.seed = int(value)
            elif key == "patch_size":
                m.patch_size = int(value)
            elif key == "omegas" and value:
                m.omegas = tuple(float(v) for v in value.split(","))
            continue
        split, sep, p = line.partition("\t")
        if not sep:
            raise ValueError(f"malformed manifest line: {line!r}")
        m.entries.append((split, p))
    m.validate()
    return m


def atomic_write_bytes(path, payload: bytes) -> None:
    tmp = Path(str(path) + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)
