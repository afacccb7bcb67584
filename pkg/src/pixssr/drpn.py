"""Dynamic receptive prompt neck.

Produces three prompts from the RGB image and the spectral input:

* a spatial prompt from directional scans in the image and FRFT domains,
* a high-frequency prompt from the residual of a pooled/upsampled feature,
* a spectral prompt, a band-by-band attention map computed on the
  preliminary reconstruction ``y3``.

Also owns the ``h2r`` head that maps ``y3`` back to RGB for the P2I loss.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .frft import DEFAULT_ORDER, frft_2d, ifrft_2d
from .ssm import SsmParams, multi_direction_scan
from .tensor import Module, Tensor, init_conv


@dataclass
class PromptSet:
    p_spa: Tensor  # [C, H, W]
    p_hf: Tensor  # [C, H, W]
    p_spe: Tensor  # [B, B], rows sum to 1
    y3: Tensor  # [B, H, W]


class Conv(Module):
    """3x3 convolution layer."""

    def __init__(self, rng, c_in: int, c_out: int, dtype=np.float64, stride: int = 1):
        super().__init__()
        self.weight, self.bias = init_conv(rng, c_out, c_in, dtype)
        self.stride = stride

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv3x3(x, self.weight, self.bias, stride=self.stride)


def rgb_mean(x: Tensor) -> Tensor:
    """Average of the three RGB planes, kept as a 1-channel map."""
    return T.mean(x, axis=0, keepdims=True)


def l2_normalize(z: Tensor, axis: int, eps: float = 1e-12) -> Tensor:
    norm = T.sqrt(T.tsum(z * z, axis=axis, keepdims=True) + eps)
    return z / norm


class Drpn(Module):
    def __init__(self, bands: int, feat: int = 8, state: int = 8, frft_order: float = DEFAULT_ORDER,
                 seed: int = 0, dtype=np.float64, scan_method: str = "fast"):
        super().__init__()
        rng = T.component_rng(seed, "drpn")
        self.bands, self.feat = bands, feat
        self.frft_order = float(frft_order)
        self.scan_method = scan_method
        # spatial / FRFT prompt
        self.shallow = Conv(rng, 3, feat, dtype)
        self.scan_spa = SsmParams(feat, state, rng, dtype)
        self.scan_frft = SsmParams(2 * feat, state, rng, dtype)
        self.spa_fuse = Conv(rng, 2 * feat, feat, dtype)
        # high-frequency prompt
        self.hf_in = Conv(rng, feat, feat, dtype)
        self.hf_out = Conv(rng, feat, feat, dtype)
        # shallow spectral path
        self.spec_in = Conv(rng, bands + 1, feat, dtype)
        self.spec_out = Conv(rng, feat, bands, dtype)
        self.fuse_spa = Conv(rng, bands + feat, bands, dtype)
        self.fuse_hf = Conv(rng, bands + feat, bands, dtype)
        # spectral self-attention on y3
        bound = 1.0 / np.sqrt(bands)
        self.q_proj = Tensor(rng.uniform(-bound, bound, (bands, bands)).astype(dtype), requires_grad=True)
        self.temperature = Tensor(np.ones(1, dtype=dtype), requires_grad=True)
        # y3 -> RGB head for the P2I loss
        self.h2r_in = Conv(rng, bands, feat, dtype)
        self.h2r_out = Conv(rng, feat, 3, dtype)

    # -- branches --------------------------------------------------------
    def frft_branch(self, f1: Tensor) -> Tensor:
        """``iFRFT(scan(FRFT(f1)))`` with real/imag parts scanned as stacked channels."""
        c, h, w = f1.shape
        z = frft_2d(T.complex_lift(f1), self.frft_order)
        stacked = T.reshape(T.transpose(z, (3, 0, 1, 2)), (2 * c, h, w))
        scanned = multi_direction_scan(stacked, self.scan_frft, self.scan_method)
        back = T.transpose(T.reshape(scanned, (2, c, h, w)), (1, 2, 3, 0))
        return T.real_part(ifrft_2d(back, self.frft_order))

    def spa_frft_prompt(self, x: Tensor) -> tuple[Tensor, Tensor]:
        f1 = self.shallow(x)
        f_spa = multi_direction_scan(f1, self.scan_spa, self.scan_method)
        f_frft = self.frft_branch(f1)
        p_spa = self.spa_fuse(T.concat([f_spa, f_frft], axis=0)) * T.silu(f1)
        return p_spa, f1

    def spa_hf_prompt(self, f1: Tensor) -> Tensor:
        f2 = T.upsample2(T.avgpool2(f1), size=f1.shape[1:])
        return self.hf_out(T.gelu(self.hf_in(f1 - f2)))

    def shallow_spectral(self, y_gp: Tensor, x: Tensor) -> Tensor:
        x_m = rgb_mean(x)
        return self.spec_out(T.gelu(self.spec_in(T.concat([y_gp, x_m], axis=0))))

    def prompt_fuse(self, y1: Tensor, p_spa: Tensor, p_hf: Tensor) -> tuple[Tensor, Tensor]:
        if not (y1.shape[1:] == p_spa.shape[1:] == p_hf.shape[1:]):
            raise T.ShapeError(f"spatial sizes differ: {y1.shape}, {p_spa.shape}, {p_hf.shape}")
        y2 = self.fuse_spa(T.concat([y1, p_spa], axis=0))
        y3 = self.fuse_hf(T.concat([y2, p_hf], axis=0))
        return y2, y3

    def spectral_prompt(self, y3: Tensor) -> Tensor:
        """Row-stochastic ``[B, B]`` map ``softmax(tau * K^T Q)``.

        Keys are the band tokens of ``y3`` and queries a learned linear mix of
        bands; both are L2-normalised along the token axis.
        """
        b, h, w = y3.shape
        tokens = T.transpose(T.reshape(y3, (b, h * w)), (1, 0))  # [HW, B]
        q = l2_normalize(T.matmul(tokens, self.q_proj), axis=0)
        k = l2_normalize(tokens, axis=0)
        scores = T.matmul(T.transpose(k, (1, 0)), q)
        return T.softmax(scores * self.temperature, axis=-1)

    def h2r(self, y3: Tensor) -> Tensor:
        return self.h2r_out(T.gelu(self.h2r_in(y3)))

    # -- full neck ---------------------------------------------------------
    def __call__(self, x: Tensor, y_gp: Tensor) -> PromptSet:
        if x.shape[0] != 3:
            raise T.ShapeError(f"RGB input must have 3 channels, got {x.shape}")
        if y_gp.shape != (self.bands,) + x.shape[1:]:
            raise T.ShapeError(f"spectral input {y_gp.shape} does not match ({self.bands}, {x.shape[1]}, {x.shape[2]})")
        p_spa, f1 = self.spa_frft_prompt(x)
        p_hf = self.spa_hf_prompt(f1)
        y1 = self.shallow_spectral(y_gp, x)
        _, y3 = self.prompt_fuse(y1, p_spa, p_hf)
        return PromptSet(p_spa=p_spa, p_hf=p_hf, p_spe=self.spectral_prompt(y3), y3=y3)
