"""Finite-difference gradient checks for every layer type in the package.

Each registered builder returns ``(forward, leaves)``: a closure recomputing
the layer output from the current leaf values, and a dict of the leaf
tensors (inputs and parameters) to check. The scalar objective is
``sum(out * R)`` for a fixed random ``R``.

The error of one leaf is the norm-wise relative error over its checked
coordinates, ``|a - n| / max(|a|, |n|, 1e-12)`` with ``a`` analytic and ``n``
central-difference gradients; a layer's error is the maximum over leaves.
A leaf that misses the tolerance at step ``h`` is measured again at ``h/10``
and keeps the smaller error: a stencil straddling a ReLU kink is wrong at
one step and right at the other, while a wrong backward pass misses at both.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import functional as fn
from . import nn
from .autograd import Tensor, no_grad
from .config import ModelConfig
from .decoder import Decoder
from .dsfb import DSFB, SEBlock, mgi
from .dsp import WindowSpec, istft_tensor
from .encoder import Encoder, InteractionBlock, MultiRangeConv
from .extractor import BaseTransformerLayer, DualPathBlock, Extractor, ImprovedTransformerLayer, RecurrentLayer
from .metrics import si_sdr_loss

TOLERANCE = 1e-5
REGISTRY: dict = {}
# fewer sampled coordinates per tensor for the expensive end-to-end check
COORD_LIMITS = {"full_model": 2}


def register(name: str):
    def deco(builder):
        REGISTRY[name] = builder
        return builder
    return deco


@dataclass
class CheckResult:
    name: str
    error: float
    worst_leaf: str
    seconds: float

    @property
    def passed(self) -> bool:
        return self.error < TOLERANCE


def _leaf(rng, *shape, scale=1.0):
    return Tensor(scale * rng.standard_normal(shape), requires_grad=True)


def _with_params(module, leaves: dict) -> dict:
    for k, p in module.parameters().items():
        leaves[f"param.{k}"] = p
    return leaves


def _perturb_params(module, rng, scale=0.3):
    """Random parameter values so zero-initialised biases/gates do not hide errors."""
    for p in module.parameters().values():
        p.data = p.data + scale * rng.standard_normal(p.shape)


@register("conv2d")
def _conv2d(rng):
    x, w, b = _leaf(rng, 2, 5, 5), _leaf(rng, 3, 2, 3, 3), _leaf(rng, 3)
    return (lambda: fn.conv2d(x, w, b, dilation=2)), dict(x=x, weight=w, bias=b)


@register("depthwise_conv")
def _depthwise(rng):
    x, w, b = _leaf(rng, 2, 4, 6, 5), _leaf(rng, 4, 1, 3, 3), _leaf(rng, 4)
    return (lambda: fn.conv2d(x, w, b, groups=4)), dict(x=x, weight=w, bias=b)


@register("linear")
def _linear(rng):
    m = nn.Linear(5, 4, rng)
    _perturb_params(m, rng)
    x = _leaf(rng, 3, 5)
    return (lambda: m(x)), _with_params(m, dict(x=x))


@register("softmax")
def _softmax(rng):
    x = _leaf(rng, 3, 6)
    return (lambda: fn.softmax(x, axis=-1)), dict(x=x)


@register("prelu")
def _prelu(rng):
    m = nn.PReLU()
    x = _leaf(rng, 4, 5)
    return (lambda: m(x)), _with_params(m, dict(x=x))


@register("rms_norm")
def _rms_norm(rng):
    m = nn.RMSNorm(4, axis=-3)
    _perturb_params(m, rng)
    x = _leaf(rng, 2, 4, 3, 5)
    return (lambda: m(x)), _with_params(m, dict(x=x))


@register("mha")
def _mha(rng):
    m = nn.MultiHeadAttention(8, 2, rng)
    _perturb_params(m, rng, 0.1)
    q, kv = _leaf(rng, 2, 5, 8), _leaf(rng, 2, 4, 8)
    return (lambda: m(q, kv, kv)), _with_params(m, dict(query=q, key_value=kv))


@register("blstm")
def _blstm(rng):
    m = nn.BLSTM(5, 4, rng)
    _perturb_params(m, rng)
    x = _leaf(rng, 2, 6, 5)
    return (lambda: m(x)), _with_params(m, dict(x=x))


@register("mgi")
def _mgi(rng):
    y, e = _leaf(rng, 2, 6, 3, 4), _leaf(rng, 2, 6, 3, 4)

    def fwd():
        a, b = mgi(y, e)
        return a * 0.7 + b * 1.3
    return fwd, dict(y=y, e=e)


@register("se")
def _se(rng):
    m = SEBlock(4, rng=rng)
    _perturb_params(m, rng)
    x = _leaf(rng, 2, 4, 3, 5)
    return (lambda: m(x)), _with_params(m, dict(x=x))


@register("improved_transformer")
def _itl(rng):
    m = ImprovedTransformerLayer(8, 2, 6, rng)
    _perturb_params(m, rng, 0.1)
    x = _leaf(rng, 2, 5, 8)
    return (lambda: m(x)), _with_params(m, dict(x=x))


@register("base_transformer")
def _btl(rng):
    m = BaseTransformerLayer(8, 2, 6, rng)
    _perturb_params(m, rng, 0.1)
    x = _leaf(rng, 2, 5, 8)
    return (lambda: m(x)), _with_params(m, dict(x=x))


@register("rnn_layer")
def _rnn(rng):
    m = RecurrentLayer(8, 2, 6, rng)
    _perturb_params(m, rng, 0.1)
    x = _leaf(rng, 2, 5, 8)
    return (lambda: m(x)), _with_params(m, dict(x=x))


@register("dual_path_block")
def _dpb(rng):
    m = DualPathBlock(8, 2, 4, rng=rng)
    x = _leaf(rng, 1, 8, 4, 3)
    return (lambda: m(x)), _with_params(m, dict(x=x))


@register("dsfb")
def _dsfb(rng):
    m = DSFB(8, rng=rng)
    _perturb_params(m, rng, 0.1)
    y, e = _leaf(rng, 1, 8, 6, 7), _leaf(rng, 1, 8, 6, 7)

    def fwd():
        a, b = m(y, e)
        return a * 0.7 + b * 1.3
    return fwd, _with_params(m, dict(y=y, e=e))


@register("interaction_block")
def _interaction(rng):
    m = InteractionBlock(4, 5, d_attn=6, reduce=2, rng=rng)
    _perturb_params(m, rng, 0.1)
    E, Y = _leaf(rng, 2, 4, 5, 3), _leaf(rng, 2, 4, 5, 4)
    return (lambda: m(E, Y)), _with_params(m, dict(E=E, Y=Y))


@register("multirange_conv")
def _multirange(rng):
    kernel = _leaf(rng, 3, 3, 3, 3, scale=0.3)
    m = MultiRangeConv(kernel, (1, 2, 3))
    x = _leaf(rng, 1, 3, 7, 6)
    return (lambda: m(x)), _with_params(m, dict(x=x, kernel=kernel))


@register("encoder")
def _encoder(rng):
    m = Encoder(6, 9, d_attn=8, attn_reduce=2, rng=rng)
    _perturb_params(m, rng, 0.1)
    y, e = _leaf(rng, 1, 2, 9, 7), _leaf(rng, 1, 2, 9, 4)

    def fwd():
        a, b = m(y, e)
        return a * 0.7 + b * 1.3
    return fwd, _with_params(m, dict(y_spec=y, e_spec=e))


@register("extractor")
def _extractor(rng):
    from .config import PRESETS

    c = PRESETS["desk"]
    m = Extractor(c["D"], c["N"], c["heads"], c["hidden"], rng=rng)
    _perturb_params(m, rng, 0.05)
    x = _leaf(rng, 1, c["D"], 5, 4)
    return (lambda: m(x)), _with_params(m, dict(x=x))


@register("idrc")
def _idrc(rng):
    s = _leaf(rng, 2, 2, 4, 5)
    return (lambda: fn.power_compress(s, 2.0, axis=-3)), dict(spec=s)


@register("istft")
def _istft(rng):
    s = _leaf(rng, 2, 2, 9, 6)
    ws = WindowSpec(16, 8)
    return (lambda: istft_tensor(s, ws, 40)), dict(spec=s)


@register("decoder")
def _decoder(rng):
    m = Decoder(4, 6, rng)
    _perturb_params(m, rng, 0.1)
    ws = WindowSpec(16, 8)
    Y, mask = _leaf(rng, 1, 4, 9, 6), _leaf(rng, 1, 6, 9, 6)
    return (lambda: m(Y, mask, ws, 0.5, 40)), _with_params(m, dict(Y_bar=Y, mask=mask))


@register("si_sdr_loss")
def _loss(rng):
    s = rng.standard_normal((2, 50))
    est = Tensor(s + 0.5 * rng.standard_normal((2, 50)), requires_grad=True)
    return (lambda: si_sdr_loss(s, est)), dict(estimate=est)


@register("full_model")
def _full_model(rng):
    from .config import PRESETS
    from .model import DCFNet

    cfg = ModelConfig(**PRESETS["desk"])
    model = DCFNet(cfg, seed=int(rng.integers(1 << 30)), dtype=np.float64)
    _perturb_params(model, rng, 0.05)
    mix = 0.3 * rng.standard_normal((1, 384))
    enr = 0.3 * rng.standard_normal((1, 256))
    return (lambda: model(mix, enr)), _with_params(model, {})


def grad_check(name: str, seed: int = 0, h: float = 1e-5, max_coords: int = 4) -> CheckResult:
    """Compare analytic and central-difference gradients for the registered layer ``name``."""
    if name not in REGISTRY:
        raise KeyError(f"layer {name!r} is not registered; known: {sorted(REGISTRY)}")
    start = time.perf_counter()
    rng = np.random.default_rng([seed, len(name)])
    forward, leaves = REGISTRY[name](rng)
    out = forward()
    R = rng.standard_normal(out.shape)
    for leaf in leaves.values():
        leaf.grad = None
    (out * R).sum().backward()

    def output():
        with no_grad():
            return forward().data

    def numeric(flat, idx, step):
        n = np.empty(len(idx))
        for j, i in enumerate(idx):
            old = flat[i]
            flat[i] = old + step
            fp = output()
            flat[i] = old - step
            fm = output()
            flat[i] = old
            # difference outputs before reducing to avoid cancellation in the large sum
            n[j] = np.sum((fp - fm) * R) / (2 * step)
        return n

    def rel_err(a, n):
        return np.linalg.norm(a - n) / max(np.linalg.norm(a), np.linalg.norm(n), 1e-12)

    worst, worst_leaf = 0.0, ""
    for key, leaf in leaves.items():
        analytic = np.zeros(leaf.shape) if leaf.grad is None else leaf.grad
        leaf.data = np.ascontiguousarray(leaf.data)
        flat = leaf.data.reshape(-1)
        idx = np.arange(flat.size)
        limit = min(max_coords, COORD_LIMITS.get(name, max_coords))
        if flat.size > limit:
            idx = rng.choice(flat.size, limit, replace=False)
        a = analytic.reshape(-1)[idx]
        err = rel_err(a, numeric(flat, idx, h))
        if err >= TOLERANCE:
            err = min(err, rel_err(a, numeric(flat, idx, h / 10)))
        if err > worst:
            worst, worst_leaf = float(err), key
    return CheckResult(name, worst, worst_leaf, time.perf_counter() - start)


def run_suite(names=None, seeds=(0,), h: float = 1e-5, max_coords: int = 4) -> list[CheckResult]:
    """Check each layer under each seed; one result per layer (the worst seed)."""
    results = []
    for name in names or sorted(REGISTRY):
        per_seed = [grad_check(name, s, h, max_coords) for s in seeds]
        worst = max(per_seed, key=lambda r: r.error)
        worst.seconds = sum(r.seconds for r in per_seed)
        results.append(worst)
    return results
