"""Encoder: channel lift, frame-level interaction block, weight-shared multi-range conv.

All tensors are batched, [B, C, F, T].
"""

from __future__ import annotations

import math

import numpy as np

from . import functional as fn
from .autograd import Tensor, swapaxes
from .nn import Conv2d, Linear, Module, uniform_weight


def _frames(x: Tensor) -> Tensor:
    """[B, c, F, T] -> [B, T, c * F] (one flattened vector per frame)."""
    B, c, F, T = x.shape
    return x.transpose(0, 3, 1, 2).reshape(B, T, c * F)


class InteractionBlock(Module):
    """Attend from each mixture frame to all enrollment frames.

    Queries come from the mixture, keys and values from the enrollment. The
    query/key maps first reduce channels with a 1x1 conv and then project the
    flattened (reduced channels x F) frame to ``d_attn``. The key path has
    no biases: a constant key offset cancels in the softmax. Values and the
    output map are 1x1 convs, so the contextualised enrollment keeps full
    C x F resolution and takes the mixture's frame count.
    """

    def __init__(self, channels, n_freq, d_attn=64, reduce=4, rng=None, dtype=np.float64):
        rng = rng if rng is not None else np.random.default_rng(0)
        r = min(reduce, channels)
        self.q_reduce = Conv2d(channels, r, 1, rng, dtype)
        self.k_reduce = Conv2d(channels, r, 1, rng, dtype, bias=False)
        self.q_proj = Linear(r * n_freq, d_attn, rng, dtype)
        self.k_proj = Linear(r * n_freq, d_attn, rng, dtype, bias=False)
        self.value = Conv2d(channels, channels, 1, rng, dtype)
        self.out = Conv2d(channels, channels, 1, rng, dtype)
        self._d_attn = d_attn

    def weights(self, E: Tensor, Y: Tensor) -> Tensor:
        """Attention matrix [B, T, T1]; rows sum to one."""
        q = self.q_proj(_frames(self.q_reduce(Y)))
        k = self.k_proj(_frames(self.k_reduce(E)))
        scores = (q @ swapaxes(k, -1, -2)) * (1.0 / math.sqrt(self._d_attn))
        return fn.softmax(scores, axis=-1)

    def forward(self, E: Tensor, Y: Tensor) -> Tensor:
        if E.ndim != 4 or Y.ndim != 4:
            raise ValueError("interaction block expects [B, C, F, T] inputs")
        if E.shape[:3] != Y.shape[:3]:
            raise ValueError(f"enrollment {E.shape} and mixture {Y.shape} differ in batch/C/F")
        if E.shape[3] == 0:
            raise ValueError("enrollment has no frames")
        B, C, F, T1 = E.shape
        T = Y.shape[3]
        attn = self.weights(E, Y)  # [B, T, T1]
        v = self.value(E).reshape(B, C * F, T1)
        ctx = (v @ swapaxes(attn, -1, -2)).reshape(B, C, F, T)
        return self.out(ctx)


class MultiRangeConv(Module):
    """ReLU(sum_k w_k * conv(X, K, dilation=d_k)) with one kernel K for all ranges."""

    def __init__(self, kernel: Tensor, dilations=(1, 2, 3), dtype=np.float64):
        self._kernel = kernel  # shared; owned and named by the parent
        self._dilations = tuple(dilations)
        self.mix = Tensor(np.full(len(dilations), 1.0 / len(dilations), dtype=dtype), requires_grad=True)

    def responses(self, X: Tensor) -> list[Tensor]:
        return [fn.conv2d(X, self._kernel, None, dilation=d, padding="same") for d in self._dilations]

    def forward(self, X: Tensor) -> Tensor:
        total = None
        for k, r in enumerate(self.responses(X)):
            term = r * self.mix[k]
            total = term if total is None else total + term
        return total.relu()


class Encoder(Module):
    def __init__(self, channels, n_freq, d_attn=64, attn_reduce=4, dilations=(1, 2, 3), rng=None, dtype=np.float64):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.lift_y = Conv2d(2, channels, 1, rng, dtype)
        self.lift_e = Conv2d(2, channels, 1, rng, dtype)
        self.interaction = InteractionBlock(channels, n_freq, d_attn, attn_reduce, rng, dtype)
        self.multirange_kernel = uniform_weight(rng, (channels, channels, 3, 3), channels * 9, dtype)
        self.range_y = MultiRangeConv(self.multirange_kernel, dilations, dtype)
        self.range_e = MultiRangeConv(self.multirange_kernel, dilations, dtype)
        self._n_freq = n_freq

    def forward(self, y_spec: Tensor, e_spec: Tensor) -> tuple[Tensor, Tensor]:
        """Compressed spectra [B, 2, F, T] / [B, 2, F, T1] -> (Y_bar, E_bar), both [B, C, F, T]."""
        if y_spec.shape[-2] != e_spec.shape[-2]:
            raise ValueError(f"frequency mismatch: mixture F={y_spec.shape[-2]}, enrollment F={e_spec.shape[-2]}")
        if y_spec.shape[-2] != self._n_freq:
            raise ValueError(f"expected F={self._n_freq}, got {y_spec.shape[-2]}")
        Y = self.lift_y(y_spec)
        E = self.lift_e(e_spec)
        E_ctx = self.interaction(E, Y)
        return self.range_y(Y), self.range_e(E_ctx)
