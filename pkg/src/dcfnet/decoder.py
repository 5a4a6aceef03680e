"""Mask application and waveform reconstruction."""

from __future__ import annotations

import numpy as np

from . import functional as fn
from .autograd import Tensor
from .dsp import WindowSpec, istft_tensor
from .nn import Conv2d, Module


def apply_mask(mixture_embed: Tensor, mask: Tensor) -> Tensor:
    if mixture_embed.shape != mask.shape:
        raise ValueError(f"embedding {mixture_embed.shape} and mask {mask.shape} differ")
    return mixture_embed * mask


class Decoder(Module):
    def __init__(self, channels, mask_dim, rng=None, dtype=np.float64):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.embed_proj = Conv2d(channels, mask_dim, 1, rng, dtype)
        self.out_conv = Conv2d(mask_dim, 2, 1, rng, dtype, bias=False)

    def embed(self, Y_bar: Tensor) -> Tensor:
        return self.embed_proj(Y_bar)

    def reconstruct(self, H: Tensor, window: WindowSpec, exponent: float, out_len: int) -> Tensor:
        """[B, D, F, T] feature tensor -> [B, out_len] waveform."""
        if out_len < 1:
            raise ValueError("output length must be positive")
        expected = window.n_frames(out_len)
        if H.shape[-1] != expected:
            raise ValueError(f"{H.shape[-1]} frames cannot produce {out_len} samples (expected {expected} frames)")
        spec = self.out_conv(H)
        spec = fn.power_compress(spec, 1.0 / exponent, axis=-3)
        return istft_tensor(spec, window, out_len)

    def forward(self, Y_bar: Tensor, mask: Tensor, window: WindowSpec, exponent: float, out_len: int) -> Tensor:
        return self.reconstruct(apply_mask(self.embed(Y_bar), mask), window, exponent, out_len)
