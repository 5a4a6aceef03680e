"""DualStream fusion blocks: symmetric mixture/enrollment flows coupled by
multiplicative cross-gating (MGI) and recalibrated by squeeze-and-excitation.
"""

from __future__ import annotations

import numpy as np

from .autograd import Tensor, concat, split_half
from .nn import Conv2d, Module, RMSNorm

CHANNEL_AXIS = -3


def mgi(y_in: Tensor, e_in: Tensor) -> tuple[Tensor, Tensor]:
    """Cross-multiply channel halves: (Y1 * E2, Y2 * E1). Halves the channel count."""
    if y_in.shape != e_in.shape:
        raise ValueError(f"stream shapes differ: {y_in.shape} vs {e_in.shape}")
    if y_in.shape[CHANNEL_AXIS] % 2:
        raise ValueError(f"MGI needs an even channel count, got {y_in.shape[CHANNEL_AXIS]}")
    y1, y2 = split_half(y_in, CHANNEL_AXIS)
    e1, e2 = split_half(e_in, CHANNEL_AXIS)
    return y1 * e2, y2 * e1


class SEBlock(Module):
    """Global average pool over (F, T), 1x1 conv, sigmoid gate, per-channel rescale.

    ``reduction > 0`` swaps the single conv for a ReLU bottleneck pair.
    """

    def __init__(self, channels, reduction=0, rng=None, dtype=np.float64):
        rng = rng if rng is not None else np.random.default_rng(0)
        if reduction:
            mid = max(channels // reduction, 1)
            self.squeeze = Conv2d(channels, mid, 1, rng, dtype)
            self.conv = Conv2d(mid, channels, 1, rng, dtype)
        else:
            self.conv = Conv2d(channels, channels, 1, rng, dtype)
        self._reduction = reduction

    def gate(self, X: Tensor) -> Tensor:
        pooled = X.mean(axis=(-2, -1), keepdims=True)
        if self._reduction:
            pooled = self.squeeze(pooled).relu()
        return self.conv(pooled).sigmoid()

    def forward(self, X: Tensor) -> Tensor:
        return X * self.gate(X)


class Flow(Module):
    """Parameters of one of the two symmetric flows inside a DSFB."""

    def __init__(self, channels, se_reduction=0, rng=None, dtype=np.float64):
        C = channels
        self.norm1 = RMSNorm(C, dtype, axis=CHANNEL_AXIS)
        self.conv1 = Conv2d(C, 2 * C, 1, rng, dtype)
        self.dwconv = Conv2d(2 * C, 2 * C, 3, rng, dtype, groups=2 * C)
        self.se = SEBlock(C, se_reduction, rng, dtype)
        self.conv_out = Conv2d(C, C, 1, rng, dtype)
        self.norm2 = RMSNorm(C, dtype, axis=CHANNEL_AXIS)
        self.conv1b = Conv2d(C, 2 * C, 1, rng, dtype)
        self.conv_outb = Conv2d(C, C, 1, rng, dtype)


class DSFB(Module):
    def __init__(self, channels, se_reduction=0, rng=None, dtype=np.float64):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.flow_y = Flow(channels, se_reduction, rng, dtype)
        self.flow_e = Flow(channels, se_reduction, rng, dtype)
        self._C = channels

    def forward(self, y: Tensor, e: Tensor) -> tuple[Tensor, Tensor]:
        if y.shape != e.shape:
            raise ValueError(f"stream shapes differ: {y.shape} vs {e.shape}")
        if y.shape[CHANNEL_AXIS] != self._C:
            raise ValueError(f"block built for {self._C} channels, got {y.shape[CHANNEL_AXIS]}")
        fy, fe = self.flow_y, self.flow_e
        a = fy.dwconv(fy.conv1(fy.norm1(y)))
        b = fe.dwconv(fe.conv1(fe.norm1(e)))
        assert a.shape[CHANNEL_AXIS] == 2 * self._C
        y_hat, e_hat = mgi(a, b)
        assert y_hat.shape[CHANNEL_AXIS] == self._C
        y = y + fy.conv_out(fy.se(y_hat))
        e = e + fe.conv_out(fe.se(e_hat))

        a = fy.conv1b(fy.norm2(y))
        b = fe.conv1b(fe.norm2(e))
        y_hat, e_hat = mgi(a, b)
        return y + fy.conv_outb(y_hat), e + fe.conv_outb(e_hat)


def fuse_streams(y: Tensor, e: Tensor, blocks, fuse: Conv2d) -> Tensor:
    """Run the DSFB stack, concatenate the two streams and map to D channels with ReLU.

    An empty ``blocks`` list concatenates the encoder outputs directly.
    """
    for block in blocks:
        y, e = block(y, e)
    return fuse(concat([y, e], axis=CHANNEL_AXIS)).relu()
