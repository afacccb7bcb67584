"""PromptSSM blocks, the DyPro-Mamba backbone and the pluggable backbone slot.

The full model is ``PixelSSR``: the prompt neck (:class:`~pixssr.drpn.Drpn`)
followed by any backbone that maps ``(rgb, y3, prompts)`` to a ``[B, H, W]``
reconstruction.  Losses and the training loop only see ``PixelSSR``, so a
different backbone can be swapped in without touching either.
"""
from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import tensor as T
from .drpn import Conv, Drpn, PromptSet, l2_normalize
from .frft import DEFAULT_ORDER
from .ssm import SsmParams, multi_direction_scan
from .tensor import Module, ModuleList, Tensor, init_linear

ARCH_KEYS = ("bands", "b_feat", "n_blocks", "n_heads", "d_state", "frft_order", "backbone", "block_norm")


@dataclass(frozen=True)
class ModelConfig:
    bands: int = 8
    b_feat: int = 8
    n_blocks: int = 3
    n_heads: int = 1
    d_state: int = 8
    frft_order: float = DEFAULT_ORDER
    backbone: str = "dypro"
    block_norm: bool = False
    scan_impl: str = "fast"
    dtype: str = "float64"
    seed: int = 0

    def __post_init__(self):
        for key in ("bands", "b_feat", "n_blocks", "n_heads", "d_state"):
            if getattr(self, key) < 1:
                raise ValueError(f"{key} must be positive, got {getattr(self, key)}")
        if self.n_blocks % 2 != 1:
            raise ValueError(f"n_blocks must be odd (encoder/bottleneck/decoder), got {self.n_blocks}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype}")

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    def arch_hash(self) -> str:
        blob = "\n".join(f"{k}={getattr(self, k)!r}" for k in ARCH_KEYS)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    @classmethod
    def from_mapping(cls, values: dict) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in values.items() if k in names})

    def as_dict(self) -> dict:
        return asdict(self)


def resize_prompt(p: Tensor, size: int) -> Tensor:
    """Bilinear resize of a square prompt map to ``size x size``, rows renormalised."""
    n = p.shape[0]
    if n == size:
        return p
    r = interpolation_matrix(n, size)
    rt = Tensor(r.astype(p.dtype))
    out = T.matmul(T.matmul(rt, p), T.transpose(rt, (1, 0)))
    return out / T.tsum(out, axis=-1, keepdims=True)


def interpolation_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Linear interpolation ``[n_out, n_in]`` with half-pixel centres."""
    r = np.zeros((n_out, n_in))
    src = np.clip((np.arange(n_out) + 0.5) * n_in / n_out - 0.5, 0.0, n_in - 1)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    r[np.arange(n_out), lo] += 1.0 - frac
    r[np.arange(n_out), hi] += frac
    return r


def _tokens(f: Tensor) -> Tensor:
    c, h, w = f.shape
    return T.transpose(T.reshape(f, (c, h * w)), (1, 0))


def _untokens(t: Tensor, h: int, w: int) -> Tensor:
    return T.reshape(T.transpose(t, (1, 0)), (t.shape[1], h, w))


def channel_norm(f: Tensor, eps: float = 1e-6) -> Tensor:
    mu = T.mean(f, axis=0, keepdims=True)
    centred = f - mu
    var = T.mean(centred * centred, axis=0, keepdims=True)
    return centred / T.sqrt(var + eps)


class PromptSsmBlock(Module):
    """Prompt-modulated spectral attention, a directional scan and a conv FFN."""

    def __init__(self, channels: int, heads: int = 1, state: int = 8, rng=None, dtype=np.float64,
                 norm: bool = False, scan_method: str = "fast"):
        super().__init__()
        if channels % heads:
            raise ValueError(f"{channels} channels cannot be split into {heads} heads")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.channels, self.heads = channels, heads
        self.norm = norm
        self.scan_method = scan_method
        self.tok_w, self.tok_b = init_linear(rng, channels, channels, dtype=dtype)
        self.q = Conv(rng, channels, channels, dtype)
        self.k = Conv(rng, channels, channels, dtype)
        self.v = Conv(rng, channels, channels, dtype)
        self.temperature = Tensor(np.ones((heads, 1, 1), dtype=dtype), requires_grad=True)
        self.scan = SsmParams(channels, state, rng, dtype)
        self.out_w, self.out_b = init_linear(rng, channels, channels, dtype=dtype)
        self.ffn_in = Conv(rng, channels, channels, dtype)
        self.ffn_out = Conv(rng, channels, channels, dtype)
        self.res_attn = Tensor(np.ones(1, dtype=dtype), requires_grad=True)
        self.res_ffn = Tensor(np.ones(1, dtype=dtype), requires_grad=True)

    def attention(self, f: Tensor, p_spe: Tensor) -> Tensor:
        """``V (P_spe softmax(K^T Q))`` per head; returns ``[C, H, W]``."""
        c, h, w = f.shape
        d = c // self.heads
        tokens = T.matmul(_tokens(f), self.tok_w) + self.tok_b
        tmap = _untokens(tokens, h, w)

        def heads_of(z):  # [C, H, W] -> [heads, HW, d]
            return T.transpose(T.reshape(z, (self.heads, d, h * w)), (0, 2, 1))

        q = l2_normalize(heads_of(self.q(tmap)), axis=1)
        k = l2_normalize(heads_of(self.k(tmap)), axis=1)
        v = heads_of(self.v(tmap))
        scores = T.softmax(T.matmul(T.transpose(k, (0, 2, 1)), q) * self.temperature, axis=-1)
        prompt = resize_prompt(p_spe, d)
        f3 = T.matmul(v, T.matmul(prompt, scores))
        return T.reshape(T.transpose(f3, (0, 2, 1)), (c, h, w))

    def __call__(self, f_in: Tensor, p_spe: Tensor) -> Tensor:
        c, h, w = f_in.shape
        if c != self.channels:
            raise T.ShapeError(f"block expects {self.channels} channels, got {f_in.shape}")
        f = channel_norm(f_in) if self.norm else f_in
        scanned = multi_direction_scan(self.attention(f, p_spe), self.scan, self.scan_method)
        proj = _untokens(T.matmul(_tokens(scanned), self.out_w) + self.out_b, h, w)
        f_mid = f_in + self.res_attn * proj
        g = channel_norm(f_mid) if self.norm else f_mid
        return f_mid + self.res_ffn * self.ffn_out(T.gelu(self.ffn_in(g)))


# ---------------------------------------------------------------------------
# backbones
# ---------------------------------------------------------------------------

class Backbone(Module):
    """Maps ``(rgb [3,H,W], y3 [B,H,W], prompts)`` to a ``[B, H, W]`` reconstruction."""

    name = "abstract"

    def forward(self, x: Tensor, y3: Tensor, prompts: PromptSet) -> Tensor:
        raise NotImplementedError

    def __call__(self, x, y3, prompts):
        return self.forward(x, y3, prompts)


BACKBONES: dict[str, type[Backbone]] = {}


def register_backbone(cls: type[Backbone]) -> type[Backbone]:
    BACKBONES[cls.name] = cls
    return cls


@register_backbone
class IdentityBackbone(Backbone):
    """Returns the prompt neck's preliminary cube unchanged."""

    name = "identity"

    def __init__(self, cfg: ModelConfig | None = None):
        super().__init__()

    def forward(self, x, y3, prompts):
        return y3


@register_backbone
class DyProMamba(Backbone):
    """Encoder block(s), strided-conv downsample, bottleneck, upsample, decoder block(s)."""

    name = "dypro"

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        rng = T.component_rng(cfg.seed, "backbone")
        dtype = cfg.np_dtype
        c, b = cfg.b_feat, cfg.bands
        per_side = cfg.n_blocks // 2
        self.rgb_in = Conv(rng, 3, c, dtype)
        self.entry = Conv(rng, c + b, c, dtype)

        def block(ch):
            return PromptSsmBlock(ch, cfg.n_heads, cfg.d_state, rng, dtype, cfg.block_norm, cfg.scan_impl)

        self.encoder = ModuleList(block(c) for _ in range(per_side))
        self.down = Conv(rng, c, 2 * c, dtype, stride=2)
        self.bottleneck = block(2 * c)
        self.up = Conv(rng, 2 * c, c, dtype)
        self.decoder = ModuleList(block(c) for _ in range(per_side))
        self.head = Conv(rng, c, b, dtype)

    def entry_feature(self, x: Tensor, y3: Tensor) -> Tensor:
        return self.entry(T.concat([self.rgb_in(x), y3], axis=0))

    def chain(self, y4: Tensor, p_spe: Tensor) -> Tensor:
        """PromptSSM stages between the entry feature and the output head."""
        f = y4
        for blk in self.encoder:
            f = blk(f, p_spe)
        low = self.bottleneck(self.down(f), p_spe)
        f = f + self.up(T.upsample2(low, size=f.shape[1:]))
        for blk in self.decoder:
            f = blk(f, p_spe)
        return f

    def forward(self, x, y3, prompts):
        _, h, w = x.shape
        if h % 4 or w % 4:
            raise T.ShapeError(f"DyPro-Mamba needs H and W divisible by 4, got {h}x{w}")
        return self.head(self.chain(self.entry_feature(x, y3), prompts.p_spe))


class PixelSSR(Module):
    """Prompt neck + backbone."""

    def __init__(self, cfg: ModelConfig, backbone: Backbone | None = None):
        super().__init__()
        self.cfg = cfg
        self.drpn = Drpn(cfg.bands, cfg.b_feat, cfg.d_state, cfg.frft_order, cfg.seed,
                         cfg.np_dtype, cfg.scan_impl)
        self.backbone = backbone if backbone is not None else BACKBONES[cfg.backbone](cfg)

    @property
    def dtype(self):
        return self.cfg.np_dtype

    def forward(self, x: Tensor, y_gp: Tensor) -> tuple[Tensor, PromptSet]:
        prompts = self.drpn(x, y_gp)
        y_r = self.backbone(x, prompts.y3, prompts)
        expected = (self.cfg.bands,) + tuple(x.shape[1:])
        if tuple(y_r.shape) != expected:
            raise T.ShapeError(f"backbone {self.backbone.name!r} returned {y_r.shape}, contract requires {expected}")
        return y_r, prompts

    __call__ = forward

    def infer(self, x: np.ndarray, y_gp: np.ndarray) -> np.ndarray:
        """Reconstruction clamped to [0, 1], no graph recorded."""
        with T.no_grad():
            y_r, _ = self.forward(Tensor(np.asarray(x, dtype=self.dtype)), Tensor(np.asarray(y_gp, dtype=self.dtype)))
        return np.clip(y_r.data, 0.0, 1.0)

    def h2r(self, y3: Tensor) -> Tensor:
        return self.drpn.h2r(y3)


def attach_backbone(cfg: ModelConfig, impl: Backbone) -> PixelSSR:
    return PixelSSR(cfg, impl)


def build_model(cfg: ModelConfig) -> PixelSSR:
    if cfg.backbone not in BACKBONES:
        raise ValueError(f"unknown backbone {cfg.backbone!r}; registered: {sorted(BACKBONES)}")
    return PixelSSR(cfg)


def dypro_forward(x: Tensor, y_gp: Tensor, model: PixelSSR) -> Tensor:
    return model(x, y_gp)[0]
