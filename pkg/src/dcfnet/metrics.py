"""SI-SDR / SDR metrics, improvement bookkeeping and target-confusion rate."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autograd import Tensor, as_tensor


def _pair(s, s_hat) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(getattr(s, "samples", s), dtype=np.float64)
    s_hat = np.asarray(getattr(s_hat, "samples", s_hat), dtype=np.float64)
    if s.shape != s_hat.shape:
        raise ValueError(f"length mismatch: reference {s.shape}, estimate {s_hat.shape}")
    return s, s_hat


def si_sdr(s, s_hat) -> float:
    """Scale-invariant SDR in dB after zero-mean normalisation.

    Returns +inf when the estimate is an exact rescaling of the reference and
    -inf when it is orthogonal to it.
    """
    s, s_hat = _pair(s, s_hat)
    s = s - s.mean()
    s_hat = s_hat - s_hat.mean()
    ref_energy = np.dot(s, s)
    if ref_energy == 0:
        raise ValueError("reference signal is identically zero")
    target = (np.dot(s, s_hat) / ref_energy) * s
    noise = s_hat - target
    t2, n2 = np.dot(target, target), np.dot(noise, noise)
    # residue below rounding level of the estimate counts as exact reconstruction
    if n2 <= (1e-14) ** 2 * np.dot(s_hat, s_hat):
        return math.inf
    if t2 == 0:
        return -math.inf
    return float(10.0 * np.log10(t2 / n2))


def sdr(s, s_hat) -> float:
    """Plain energy-ratio SDR, 10 log10(|s|^2 / |s - s_hat|^2)."""
    s, s_hat = _pair(s, s_hat)
    err = np.dot(s - s_hat, s - s_hat)
    sig = np.dot(s, s)
    if sig == 0:
        raise ValueError("reference signal is identically zero")
    if err == 0:
        return math.inf
    return float(10.0 * np.log10(sig / err))


def si_sdr_loss(s, s_hat: Tensor, eps: float = 1e-8) -> Tensor:
    """Negative SI-SDR averaged over the batch; differentiable in ``s_hat``.

    ``s`` and ``s_hat`` are [L] or [B, L]. ``eps`` keeps every ratio finite.
    """
    s_hat = as_tensor(s_hat)
    s = np.asarray(getattr(s, "data", s), dtype=s_hat.dtype)
    if s.shape != s_hat.shape:
        raise ValueError(f"length mismatch: reference {s.shape}, estimate {s_hat.shape}")
    if not np.any(s):
        raise ValueError("reference signal is identically zero")
    s = s - s.mean(axis=-1, keepdims=True)
    est = s_hat - s_hat.mean(axis=-1, keepdims=True)
    ref = Tensor(s)
    energy = (s * s).sum(axis=-1, keepdims=True) + eps
    target = ((est * ref).sum(axis=-1, keepdims=True) / energy) * ref
    noise = est - target
    ratio = ((target * target).sum(axis=-1) + eps) / ((noise * noise).sum(axis=-1) + eps)
    return (ratio.log() * (-10.0 / math.log(10.0))).mean()


@dataclass
class EvalItem:
    id: str
    si_sdr_mix: float
    si_sdr_est: float
    si_sdri: float
    sdri: float
    confused: bool
    si_sdri_partner: float = math.nan


def _diff(a: float, b: float) -> float:
    if a == b:  # covers inf - inf for identical systems
        return 0.0
    return a - b


def improvements(mix, s_hat, s, item_id: str = "") -> EvalItem:
    mix_si = si_sdr(s, mix)
    est_si = si_sdr(s, s_hat)
    si_i = _diff(est_si, mix_si)
    sd_i = _diff(sdr(s, s_hat), sdr(s, mix))
    return EvalItem(item_id, mix_si, est_si, si_i, sd_i, bool(si_i < 0))


def tcp_rate(items) -> float:
    """Fraction of items whose SI-SDR improvement is below 0 dB."""
    items = list(items)
    if not items:
        raise ValueError("tcp_rate of an empty item list")
    return sum(1 for it in items if it.si_sdri < 0) / len(items)


@dataclass
class EvalReport:
    items: list[EvalItem] = field(default_factory=list)

    @property
    def mean_si_sdri(self) -> float:
        return float(np.mean([it.si_sdri for it in self.items]))

    @property
    def mean_sdri(self) -> float:
        return float(np.mean([it.sdri for it in self.items]))

    @property
    def tcp_rate(self) -> float:
        return tcp_rate(self.items)

    def write_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "si_sdr_mix", "si_sdr_est", "si_sdri", "sdri", "confused"])
            for it in self.items:
                w.writerow([it.id, _fmt(it.si_sdr_mix), _fmt(it.si_sdr_est), _fmt(it.si_sdri),
                            _fmt(it.sdri), int(it.confused)])
            w.writerow(["MEAN", "", "", _fmt(self.mean_si_sdri), _fmt(self.mean_sdri), _fmt(self.tcp_rate)])

    def write_scatter_csv(self, path) -> None:
        """One row per item: SI-SDRi for this target and for the other speaker of the mixture."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "si_sdri_s1", "si_sdri_s2"])
            for it in self.items:
                w.writerow([it.id, _fmt(it.si_sdri), _fmt(it.si_sdri_partner)])


def _fmt(v: float) -> str:
    return repr(float(v))


def read_eval_csv(path) -> tuple[list[dict], dict]:
    """Return (item rows, footer row) from a report written by :meth:`EvalReport.write_csv`."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    return rows[:-1], rows[-1]
