"""Dual-path mask estimator.

Each block runs a sequence layer along frequency for every frame (intra)
and then along time for every frequency bin (inter). Three sequence-layer
flavours are available: ``improved`` (attention + BLSTM), ``base``
(attention + feed-forward) and ``rnn`` (BLSTM only).
"""

from __future__ import annotations

import numpy as np

from .autograd import Tensor
from .nn import BLSTM, Conv2d, Linear, Module, MultiHeadAttention, PReLU, RMSNorm


class ImprovedTransformerLayer(Module):
    def __init__(self, d, heads, hidden, rng=None, dtype=np.float64):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.mha = MultiHeadAttention(d, heads, rng, dtype)
        self.norm1 = RMSNorm(d, dtype)
        self.blstm = BLSTM(d, hidden, rng, dtype)
        self.proj = Linear(2 * hidden, d, rng, dtype)
        self.norm2 = RMSNorm(d, dtype)

    def forward(self, seq: Tensor) -> Tensor:
        x = self.norm1(seq + self.mha(seq))
        return self.norm2(x + self.proj(self.blstm(x)))


class BaseTransformerLayer(Module):
    def __init__(self, d, heads, hidden, rng=None, dtype=np.float64):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.mha = MultiHeadAttention(d, heads, rng, dtype)
        self.norm1 = RMSNorm(d, dtype)
        self.ff1 = Linear(d, 2 * hidden, rng, dtype)
        self.ff2 = Linear(2 * hidden, d, rng, dtype)
        self.norm2 = RMSNorm(d, dtype)

    def forward(self, seq: Tensor) -> Tensor:
        x = self.norm1(seq + self.mha(seq))
        return self.norm2(x + self.ff2(self.ff1(x).relu()))


class RecurrentLayer(Module):
    def __init__(self, d, heads, hidden, rng=None, dtype=np.float64):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.blstm = BLSTM(d, hidden, rng, dtype)
        self.proj = Linear(2 * hidden, d, rng, dtype)
        self.norm = RMSNorm(d, dtype)

    def forward(self, seq: Tensor) -> Tensor:
        return self.norm(seq + self.proj(self.blstm(seq)))


LAYERS = {
    "improved": ImprovedTransformerLayer,
    "base": BaseTransformerLayer,
    "rnn": RecurrentLayer,
}


class DualPathBlock(Module):
    def __init__(self, d, heads, hidden, kind="improved", rng=None, dtype=np.float64):
        rng = rng if rng is not None else np.random.default_rng(0)
        layer = LAYERS[kind]
        self.intra = layer(d, heads, hidden, rng, dtype)
        self.inter = layer(d, heads, hidden, rng, dtype)

    def intra_pass(self, X: Tensor) -> Tensor:
        """[B, D, F, T] -> [B, D, F, T], each frame processed as a length-F sequence."""
        B, D, F, T = X.shape
        s = X.transpose(0, 3, 2, 1).reshape(B * T, F, D)
        return self.intra(s).reshape(B, T, F, D).transpose(0, 3, 2, 1)

    def inter_pass(self, X: Tensor) -> Tensor:
        B, D, F, T = X.shape
        s = X.transpose(0, 2, 3, 1).reshape(B * F, T, D)
        return self.inter(s).reshape(B, F, T, D).transpose(0, 3, 1, 2)

    def forward(self, X: Tensor) -> Tensor:
        return self.inter_pass(self.intra_pass(X))


class Extractor(Module):
    """N dual-path blocks followed by a PReLU + 1x1 conv mask head (unbounded mask)."""

    def __init__(self, d, n_blocks, heads, hidden, kind="improved", rng=None, dtype=np.float64):
        rng = rng if rng is not None else np.random.default_rng(0)
        if kind not in LAYERS:
            raise ValueError(f"unknown extractor kind {kind!r}")
        self.blocks = [DualPathBlock(d, heads, hidden, kind, rng, dtype) for _ in range(n_blocks)]
        self.act = PReLU(dtype)
        self.head = Conv2d(d, d, 1, rng, dtype)

    def forward(self, X: Tensor) -> Tensor:
        squeeze = X.ndim == 3
        if squeeze:
            X = X.reshape((1,) + X.shape)
        for block in self.blocks:
            X = block(X)
        m = self.head(self.act(X))
        return m.reshape(m.shape[1:]) if squeeze else m
