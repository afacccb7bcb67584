"""Adam with polynomial learning-rate decay."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Tensor


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, name: str):
        super().__init__(f"non-finite gradient for parameter {name!r}; step rejected")
        self.param_name = name


@dataclass
class OptimizerState:
    lr0: float = 2e-4
    total_steps: int = 1
    power: float = 1.5
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def lr(self, t: int | None = None) -> float:
        t = self.t if t is None else t
        frac = min(max(t / self.total_steps, 0.0), 1.0)
        return self.lr0 * (1.0 - frac) ** self.power


def adam_step(params: dict[str, Tensor], state: OptimizerState, grads: dict[str, np.ndarray] | None = None) -> float:
    """Apply one Adam update in place and return the learning rate used.

    ``grads`` defaults to each parameter's ``.grad``; missing gradients are
    treated as zero.  All gradients are validated before anything is touched,
    so a rejected step leaves parameters and moments unchanged.
    """
    if state.t >= state.total_steps:
        raise ValueError(f"step {state.t} is past the schedule end ({state.total_steps})")
    resolved = {}
    for name, p in params.items():
        g = grads.get(name) if grads is not None else p.grad
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {name!r} {p.shape}")
        if not np.isfinite(g).all():
            raise NonFiniteGradientError(name)
        resolved[name] = g

    lr = state.lr()
    t = state.t + 1
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for name, p in params.items():
        g = resolved[name]
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.m[name], state.v[name] = m, v
        m_hat = m / c1
        v_hat = v / c2
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    state.t = t
    return lr
