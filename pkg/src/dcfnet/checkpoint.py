"""Binary checkpoint format.

Layout (all integers u32 little-endian)::

    b"DCFN" | version | blob length | UTF-8 JSON blob
    then per tensor, names in lexicographic order:
    name length | UTF-8 name | rank | extents... | float32 LE payload (row-major)

The JSON blob holds the run configuration and training metadata. Optimizer
moments, when present, are stored as extra tensors named ``optim.m.<param>``
and ``optim.v.<param>``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"DCFN"
VERSION = 1
_U32 = struct.Struct("<I")


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    tensors: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def params(self) -> dict:
        return {k: v for k, v in self.tensors.items() if not k.startswith("optim.")}

    def moments(self) -> tuple[dict, dict]:
        m = {k[len("optim.m."):]: v for k, v in self.tensors.items() if k.startswith("optim.m.")}
        v = {k[len("optim.v."):]: a for k, a in self.tensors.items() if k.startswith("optim.v.")}
        return m, v


def encode(tensors: dict, meta: dict) -> bytes:
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    out = [MAGIC, _U32.pack(VERSION), _U32.pack(len(blob)), blob]
    for name in sorted(tensors):
        arr = np.ascontiguousarray(np.asarray(tensors[name]), dtype="<f4")
        raw = name.encode("utf-8")
        out += [_U32.pack(len(raw)), raw, _U32.pack(arr.ndim)]
        out += [_U32.pack(n) for n in arr.shape]
        out.append(arr.tobytes())
    return b"".join(out)


def decode(buf: bytes) -> Checkpoint:
    """Parse a whole checkpoint; raises :class:`CheckpointError` before returning anything partial."""
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointError(f"truncated checkpoint at byte {pos} (need {n} more, have {len(buf) - pos})")
        chunk = buf[pos:pos + n]
        pos += n
        return chunk

    def u32():
        return _U32.unpack(take(4))[0]

    if take(4) != MAGIC:
        raise CheckpointError("bad magic; not a checkpoint file")
    version = u32()
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    try:
        meta = json.loads(take(u32()).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt metadata blob: {exc}") from None
    tensors = {}
    while pos < len(buf):
        try:
            name = take(u32()).decode("utf-8")
        except UnicodeDecodeError:
            raise CheckpointError(f"corrupt tensor name at byte {pos}") from None
        rank = u32()
        if rank > 8:
            raise CheckpointError(f"implausible rank {rank} for {name!r}")
        shape = tuple(u32() for _ in range(rank))
        count = int(np.prod(shape, dtype=np.int64))
        tensors[name] = np.frombuffer(take(4 * count), dtype="<f4").reshape(shape).copy()
    return Checkpoint(tensors, meta)


def save_checkpoint(path, params: dict, meta: dict | None = None, optimizer=None) -> None:
    """Write ``params`` ({name: Tensor or ndarray}) and optional optimizer moments atomically."""
    tensors = {k: getattr(v, "data", v) for k, v in params.items()}
    meta = dict(meta or {})
    if optimizer is not None:
        for k in optimizer.m:
            tensors[f"optim.m.{k}"] = optimizer.m[k]
            tensors[f"optim.v.{k}"] = optimizer.v[k]
        meta["optim"] = dict(step=optimizer.step, beta1=optimizer.beta1, beta2=optimizer.beta2,
                             eps=optimizer.eps, weight_decay=optimizer.weight_decay)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode(tensors, meta))
    tmp.replace(path)


def load_checkpoint(path) -> Checkpoint:
    return decode(Path(path).read_bytes())


def restore_optimizer(ckpt: Checkpoint, params: dict):
    """Rebuild an :class:`OptimizerState` from a checkpoint, matched against ``params``."""
    from .optim import OptimizerState

    info = ckpt.meta.get("optim")
    if info is None:
        raise CheckpointError("checkpoint carries no optimizer state")
    m, v = ckpt.moments()
    st = OptimizerState(step=info["step"], beta1=info["beta1"], beta2=info["beta2"],
                        eps=info["eps"], weight_decay=info["weight_decay"])
    for name, p in params.items():
        if name not in m or name not in v:
            raise CheckpointError(f"optimizer state lacks {name}")
        if m[name].shape != p.shape:
            raise CheckpointError(f"optimizer moment shape mismatch for {name}")
        st.m[name] = m[name].astype(p.dtype)
        st.v[name] = v[name].astype(p.dtype)
    return st
