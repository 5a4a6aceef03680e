"""Layer containers with hierarchical parameter naming.

Initialisation: weights uniform in +-sqrt(1/fan_in), biases zero, norm gains
one, LSTM forget-gate bias one.
"""

from __future__ import annotations

import math

import numpy as np

from . import functional as fn
from .autograd import Tensor, concat, swapaxes


class Module:
    """Base class; parameters are ``Tensor`` attributes with ``requires_grad``."""

    def named_parameters(self, prefix: str = ""):
        for key, value in vars(self).items():
            if key.startswith("_"):
                continue
            name = f"{prefix}{key}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self) -> dict[str, Tensor]:
        """Lexicographically ordered ``{dotted.name: Tensor}`` map."""
        items = list(self.named_parameters())
        names = [n for n, _ in items]
        if len(set(names)) != len(names):
            raise RuntimeError("duplicate parameter names")
        return dict(sorted(items))

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters().values())

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.grad = None

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def uniform_weight(rng: np.random.Generator, shape, fan_in: int, dtype) -> Tensor:
    bound = math.sqrt(1.0 / fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype), requires_grad=True)


def zeros(shape, dtype) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)


def ones(shape, dtype) -> Tensor:
    return Tensor(np.ones(shape, dtype=dtype), requires_grad=True)


class Conv2d(Module):
    def __init__(self, c_in, c_out, kernel=1, rng=None, dtype=np.float64, groups=1, dilation=1, bias=True):
        rng = rng if rng is not None else np.random.default_rng(0)
        kh, kw = (kernel, kernel) if isinstance(kernel, int) else kernel
        fan_in = (c_in // groups) * kh * kw
        self.weight = uniform_weight(rng, (c_out, c_in // groups, kh, kw), fan_in, dtype)
        self.bias = zeros((c_out,), dtype) if bias else None
        self._groups = groups
        self._dilation = dilation

    def forward(self, x: Tensor, dilation=None) -> Tensor:
        return fn.conv2d(x, self.weight, self.bias, dilation=dilation or self._dilation,
                         padding="same", groups=self._groups)


class Linear(Module):
    def __init__(self, d_in, d_out, rng=None, dtype=np.float64, bias=True):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weight = uniform_weight(rng, (d_out, d_in), d_in, dtype)
        self.bias = zeros((d_out,), dtype) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return fn.linear(x, self.weight, self.bias)


class RMSNorm(Module):
    """RMS normalisation over one axis (channels by default for [.., C, F, T])."""

    def __init__(self, dim, dtype=np.float64, axis=-1, eps=1e-8):
        self.gain = ones((dim,), dtype)
        self._axis = axis
        self._eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return fn.rms_norm(x, self.gain, axis=self._axis, eps=self._eps)


class PReLU(Module):
    def __init__(self, dtype=np.float64, init=0.25):
        self.slope = Tensor(np.full((1,), init, dtype=dtype), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return fn.prelu(x, self.slope)


def multi_head_attention(query: Tensor, key: Tensor, value: Tensor, heads: int, proj: dict,
                         return_weights: bool = False):
    """Scaled dot-product attention with ``heads`` heads over the last two axes.

    ``query`` is [..., L, d]; ``key``/``value`` are [..., S, d]. ``proj`` maps
    q/k/v/o to (weight [d, d], bias [d] or None). Softmax runs over S.
    """
    d = query.shape[-1]
    if d % heads:
        raise ValueError(f"model dim {d} not divisible by {heads} heads")
    dh = d // heads

    def split(t: Tensor, which: str) -> Tensor:
        w, b = proj[which]
        t = fn.linear(t, w, b)
        lead, n = t.shape[:-2], t.shape[-2]
        t = t.reshape(lead + (n, heads, dh))
        axes = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
        return t.transpose(axes)  # [..., h, n, dh]

    q, k, v = split(query, "q"), split(key, "k"), split(value, "v")
    scores = (q @ swapaxes(k, -1, -2)) * (1.0 / math.sqrt(dh))
    attn = fn.softmax(scores, axis=-1)
    ctx = attn @ v  # [..., h, L, dh]
    lead = ctx.shape[:-3]
    axes = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
    ctx = ctx.transpose(axes).reshape(lead + (query.shape[-2], d))
    w, b = proj["o"]
    out = fn.linear(ctx, w, b)
    return (out, attn) if return_weights else out


class MultiHeadAttention(Module):
    def __init__(self, d, heads, rng=None, dtype=np.float64):
        if d % heads:
            raise ValueError(f"model dim {d} not divisible by {heads} heads")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.q = Linear(d, d, rng, dtype)
        self.k = Linear(d, d, rng, dtype, bias=False)  # a key bias cancels in the softmax
        self.v = Linear(d, d, rng, dtype)
        self.o = Linear(d, d, rng, dtype)
        self._heads = heads

    def proj(self) -> dict:
        return {n: (m.weight, m.bias) for n, m in (("q", self.q), ("k", self.k), ("v", self.v), ("o", self.o))}

    def forward(self, query, key=None, value=None, return_weights=False):
        key = query if key is None else key
        value = key if value is None else value
        return multi_head_attention(query, key, value, self._heads, self.proj(), return_weights)


class LSTMDirection(Module):
    def __init__(self, d_in, hidden, rng, dtype):
        self.w_ih = uniform_weight(rng, (4 * hidden, d_in), d_in, dtype)
        self.w_hh = uniform_weight(rng, (4 * hidden, hidden), hidden, dtype)
        b = np.zeros(4 * hidden, dtype=dtype)
        b[hidden: 2 * hidden] = 1.0
        self.bias = Tensor(b, requires_grad=True)

    def weights(self):
        return self.w_ih, self.w_hh, self.bias


class BLSTM(Module):
    """Bidirectional LSTM over [N, L, d_in] -> [N, L, 2 * hidden]."""

    def __init__(self, d_in, hidden, rng=None, dtype=np.float64):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.fwd = LSTMDirection(d_in, hidden, rng, dtype)
        self.bwd = LSTMDirection(d_in, hidden, rng, dtype)

    def forward(self, x: Tensor) -> Tensor:
        squeeze = x.ndim == 2
        if squeeze:
            x = x.reshape((1,) + x.shape)
        out = fn.blstm(x, self.fwd.weights(), self.bwd.weights())
        return out.reshape(out.shape[1:]) if squeeze else out


def channel_concat(a: Tensor, b: Tensor) -> Tensor:
    return concat([a, b], axis=-3)
