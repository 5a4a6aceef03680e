"""Training loop: seeded shuffling, SI-SDR loss, clipping, AdamW, per-epoch checkpoints and log."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt_io
from .autograd import backward, finite_checks, no_grad
from .config import RunConfig
from .metrics import si_sdr, si_sdr_loss
from .model import DCFNet
from .optim import OptimizerState, Schedule, adamw_step, clip_grad_norm, lr_at
from .synthdata import load_item, read_manifest

LOG_FIELDS = ("epoch", "step", "lr", "loss", "val_si_sdri")


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class Item:
    id: str
    mix: np.ndarray
    enroll: np.ndarray
    target: np.ndarray


def load_items(records) -> list[Item]:
    out = []
    for rec in records:
        w = load_item(rec)
        out.append(Item(rec["id"], w["mix"], w["enroll"], w["target"]))
    return out


def split_records(records, val_fraction: float) -> tuple[list, list, list]:
    """(train, val, test). ``test-*`` ids are the test split; the tail of the rest is held out for validation."""
    test = [r for r in records if r["id"].startswith("test-")]
    rest = [r for r in records if not r["id"].startswith("test-")]
    n_val = int(round(len(rest) * val_fraction)) if len(rest) > 1 else 0
    n_val = min(n_val, len(rest) - 1)
    return rest[: len(rest) - n_val], rest[len(rest) - n_val:], test


def dtype_for(precision: str):
    if precision not in ("single", "double"):
        raise ValueError(f"precision must be 'single' or 'double', got {precision!r}")
    return np.float32 if precision == "single" else np.float64


def make_batches(items, batch: int, rng: np.random.Generator) -> list[list]:
    """Shuffle, then group items of equal (mixture, enrollment) length into batches of at most ``batch``."""
    buckets: dict = {}
    for idx in rng.permutation(len(items)):
        it = items[idx]
        buckets.setdefault((it.mix.size, it.enroll.size), []).append(it)
    batches = [b[i:i + batch] for b in buckets.values() for i in range(0, len(b), batch)]
    return [batches[i] for i in rng.permutation(len(batches))]


def train_step(model, opt: OptimizerState, batch, lr: float, clip: float, label: str = "") -> float:
    params = model.parameters()
    mix = np.stack([it.mix for it in batch])
    enr = np.stack([it.enroll for it in batch])
    tgt = np.stack([it.target for it in batch])
    with finite_checks(False):
        loss = si_sdr_loss(tgt, model(mix, enr))
        value = loss.item()
        if not math.isfinite(value):
            ids = ", ".join(it.id for it in batch)
            raise TrainingDiverged(f"non-finite loss {value} in batch {label} [{ids}]")
        grads = backward(loss, params)
    if not all(np.all(np.isfinite(g)) for g in grads.values()):
        ids = ", ".join(it.id for it in batch)
        raise TrainingDiverged(f"non-finite gradient in batch {label} [{ids}]")
    clip_grad_norm(grads, clip)
    adamw_step(params, grads, opt, lr)
    return value


def mean_si_sdri(model, items, batch: int = 4) -> float:
    if not items:
        return math.nan
    vals = []
    for i in range(0, len(items), batch):
        chunk = items[i:i + batch]
        groups: dict = {}
        for it in chunk:
            groups.setdefault((it.mix.size, it.enroll.size), []).append(it)
        for group in groups.values():
            with no_grad():
                est = model(np.stack([g.mix for g in group]), np.stack([g.enroll for g in group])).data
            for g, e in zip(group, est):
                vals.append(si_sdr(g.target, e.astype(np.float64)) - si_sdr(g.target, g.mix))
    return float(np.mean(vals))


def _write_log(path: Path, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=LOG_FIELDS)
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(row[k]) if isinstance(row[k], float) else row[k] for k in LOG_FIELDS})


def read_log(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return [{k: (int(v) if k in ("epoch", "step") else float(v)) for k, v in row.items()}
                for row in csv.DictReader(fh)]


def train_loop(cfg: RunConfig, out_dir, manifest=None, resume=None, log=print) -> list[dict]:
    """Train ``DCFNet(cfg.model)`` on the manifest's train split; returns the epoch log rows.

    Writes ``out_dir/config.txt``, ``out_dir/train_log.csv``, one
    ``checkpoints/epoch_NNN.ckpt`` per epoch (with optimizer state), and
    ``checkpoints/best.ckpt`` selected on the validation slice. ``resume``
    continues from an epoch checkpoint of a run with the same configuration.
    """
    t = cfg.train
    out_dir = Path(out_dir)
    ckpt_dir = out_dir / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.txt").write_text(cfg.dumps())
    records = read_manifest(manifest or cfg.data.manifest)
    train_recs, val_recs, _ = split_records(records, t.val_fraction)
    if not train_recs:
        raise ValueError("manifest has no training records")
    train_items, val_items = load_items(train_recs), load_items(val_recs)

    model = DCFNet(cfg.model, seed=t.seed, dtype=dtype_for(t.precision))
    params = model.parameters()
    sched = Schedule(t.lr, t.warmup_epochs, t.epochs)
    history: list[dict] = []
    start, step, best = 0, 0, -math.inf
    if resume is not None:
        ck = ckpt_io.load_checkpoint(resume)
        model.load_state(ck.params())
        opt = ckpt_io.restore_optimizer(ck, params)
        start, step = ck.meta["epoch"], ck.meta["step"]
        best = ck.meta.get("best", -math.inf)
        history = list(ck.meta.get("history", []))
    else:
        opt = OptimizerState.for_params(params, weight_decay=t.wd)

    for epoch in range(start, t.epochs):
        batches = make_batches(train_items, t.batch, np.random.default_rng([t.seed, epoch]))
        losses = []
        for i, batch in enumerate(batches):
            lr = lr_at(epoch + (i + 1) / len(batches), sched)
            losses.append(train_step(model, opt, batch, lr, t.clip, label=f"epoch {epoch + 1} #{i}"))
            step += 1
        val = mean_si_sdri(model, val_items, t.batch)
        row = dict(epoch=epoch + 1, step=step, lr=lr_at(epoch + 1, sched), loss=float(np.mean(losses)),
                   val_si_sdri=val)
        history.append(row)
        _write_log(out_dir / "train_log.csv", history)
        # without a validation slice the latest epoch is kept as "best"
        improved = not val_items or val > best
        if improved and val_items:
            best = val
        meta = dict(config=cfg.to_dict(), epoch=epoch + 1, step=step, history=history, best=best)
        ckpt_io.save_checkpoint(ckpt_dir / f"epoch_{epoch + 1:03d}.ckpt", params, meta, opt)
        _prune(ckpt_dir, t.keep_checkpoints)
        if improved:
            ckpt_io.save_checkpoint(ckpt_dir / "best.ckpt", params, meta)
        log(f"epoch {epoch + 1}/{t.epochs} lr {row['lr']:.3g} loss {row['loss']:.3f} val SI-SDRi {val:.2f} dB")
    return history


def _prune(ckpt_dir: Path, keep: int) -> None:
    if keep > 0:
        for old in sorted(ckpt_dir.glob("epoch_*.ckpt"))[:-keep]:
            old.unlink()


def fit_example(model, item: Item, steps: int, lr: float = 1e-3, warmup: int = 20, clip: float = 5.0,
                weight_decay: float = 0.0) -> list[float]:
    """Repeatedly step on a single item (warmup + cosine over ``steps``); returns the loss trace."""
    params = model.parameters()
    opt = OptimizerState.for_params(params, weight_decay=weight_decay)
    sched = Schedule(lr, warmup, steps)
    return [train_step(model, opt, [item], lr_at(k + 1, sched), clip, label=f"step {k}") for k in range(steps)]


def model_from_checkpoint(path, dtype=None) -> tuple[DCFNet, RunConfig]:
    ck = ckpt_io.load_checkpoint(path)
    cfg = RunConfig.from_dict(ck.meta["config"])
    model = DCFNet(cfg.model, seed=cfg.train.seed, dtype=dtype or dtype_for(cfg.train.precision))
    model.load_state(ck.params())
    return model, cfg
