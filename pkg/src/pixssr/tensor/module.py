"""Minimal parameter container used by the network layers."""
from __future__ import annotations

import zlib
from typing import Iterator

import numpy as np

from .core import Tensor


def component_rng(seed: int, name: str) -> np.random.Generator:
    """Independent generator per named component, stable across layouts."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode("utf-8"))])


class Module:
    """Holds parameters and sub-modules in attribute insertion order."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_children", {})

    def __setattr__(self, key, value):
        if isinstance(value, Tensor) and value.requires_grad:
            self._params[key] = value
        elif isinstance(value, Module):
            self._children[key] = value
        object.__setattr__(self, key, value)

    def add_module(self, name: str, module: "Module") -> None:
        setattr(self, name, module)

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, p in self._params.items():
            yield prefix + name, p
        for name, child in self._children.items():
            yield from child.named_parameters(prefix + name + ".")

    def parameters(self) -> dict[str, Tensor]:
        return dict(self.named_parameters())

    def zero_grad(self) -> None:
        for _, p in self.named_parameters():
            p.grad = None

    def num_parameters(self) -> int:
        return sum(p.size for _, p in self.named_parameters())


class ModuleList(Module):
    def __init__(self, modules=()):
        super().__init__()
        self._items: list[Module] = []
        for m in modules:
            self.append(m)

    def append(self, m: Module) -> None:
        setattr(self, str(len(self._items)), m)
        self._items.append(m)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]


def init_conv(rng: np.random.Generator, c_out: int, c_in: int, dtype=np.float64) -> tuple[Tensor, Tensor]:
    fan_in = c_in * 9
    bound = 1.0 / np.sqrt(fan_in)
    w = rng.uniform(-bound, bound, size=(c_out, c_in, 3, 3)).astype(dtype)
    b = rng.uniform(-bound, bound, size=(c_out,)).astype(dtype)
    return Tensor(w, requires_grad=True), Tensor(b, requires_grad=True)


def init_linear(rng: np.random.Generator, n_in: int, n_out: int, bias: bool = True, dtype=np.float64):
    bound = 1.0 / np.sqrt(n_in)
    w = Tensor(rng.uniform(-bound, bound, size=(n_in, n_out)).astype(dtype), requires_grad=True)
    if not bias:
        return w, None
    b = Tensor(rng.uniform(-bound, bound, size=(n_out,)).astype(dtype), requires_grad=True)
    return w, b
