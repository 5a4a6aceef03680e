"""AdamW with decoupled weight decay, warmup + cosine schedule, global-norm clipping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Schedule:
    base_lr: float = 5e-4
    warmup_epochs: float = 5.0
    total_epochs: float = 150.0

    def __post_init__(self):
        if not 0 <= self.warmup_epochs < self.total_epochs:
            raise ValueError("need 0 <= warmup_epochs < total_epochs")


def lr_at(epoch: float, sched: Schedule) -> float:
    """Linear ramp from 0 to ``base_lr`` over the warmup, then half-cosine decay to 0."""
    if not 0 <= epoch <= sched.total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {sched.total_epochs}]")
    if epoch < sched.warmup_epochs:
        return sched.base_lr * epoch / sched.warmup_epochs
    progress = (epoch - sched.warmup_epochs) / (sched.total_epochs - sched.warmup_epochs)
    return sched.base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


@dataclass
class OptimizerState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01

    @classmethod
    def for_params(cls, params: dict, weight_decay: float = 0.01, **kw) -> "OptimizerState":
        st = cls(weight_decay=weight_decay, **kw)
        for name, p in params.items():
            st.m[name] = np.zeros_like(_data(p))
            st.v[name] = np.zeros_like(_data(p))
        return st


def _data(p):
    return p.data if hasattr(p, "data") and not isinstance(p, np.ndarray) else p


def adamw_step(params: dict, grads: dict, state: OptimizerState, lr: float) -> None:
    """One in-place update of every parameter in ``params`` (Tensors or float64 arrays)."""
    if set(grads) != set(params):
        raise KeyError("gradients and parameters are not aligned by name")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name in sorted(params):
        p = params[name]
        w = _data(p)
        g = np.asarray(grads[name])
        if g.shape != w.shape or state.m[name].shape != w.shape:
            raise ValueError(f"shape mismatch for {name}: param {w.shape}, grad {g.shape}")
        m = state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        v = state.v[name] = b2 * state.v[name] + (1.0 - b2) * g * g
        update = lr * ((m / c1) / (np.sqrt(v / c2) + state.eps)) + lr * state.weight_decay * w
        new = (w - update).astype(w.dtype, copy=False)
        if isinstance(p, np.ndarray):
            p[...] = new
        else:
            p.data = new


def global_norm(grads: dict) -> float:
    return math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for _, g in sorted(grads.items())))


def clip_grad_norm(grads: dict, max_norm: float) -> float:
    """Scale ``grads`` in place so their global L2 norm is at most ``max_norm``; returns the pre-clip norm."""
    norm = global_norm(grads)
    if norm > max_norm:
        # pull slightly inside the ball so rounding in low precision cannot overshoot
        tiny = max(np.finfo(g.dtype).eps for g in grads.values())
        scale = max_norm / norm * (1.0 - 4.0 * tiny)
        for name in grads:
            grads[name] = grads[name] * np.asarray(scale, dtype=grads[name].dtype)
    return norm
