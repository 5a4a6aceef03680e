"""Evaluate a trained model (or a reference system) over manifest records."""

from __future__ import annotations

from .metrics import EvalReport, improvements, si_sdr
from .synthdata import load_item

MODES = ("model", "oracle", "identity")


def _estimate(mode, model, mix, enroll, target):
    if mode == "oracle":
        return target.copy()
    if mode == "identity":
        return mix.copy()
    return model.separate(mix, enroll)


def evaluate(records, mode: str = "model", model=None) -> EvalReport:
    """Per-item SI-SDRi / SDRi and confusion flags, in manifest order.

    ``oracle`` returns the reference itself and ``identity`` the unprocessed
    mixture. When an item directory carries the interfering speaker and an
    enrollment for it, the same system is also asked for that speaker and
    its SI-SDRi is stored as the partner value.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if mode == "model" and model is None:
        raise ValueError("model mode needs a model")
    report = EvalReport()
    for rec in records:
        w = load_item(rec)
        est = _estimate(mode, model, w["mix"], w["enroll"], w["target"])
        item = improvements(w["mix"], est, w["target"], rec["id"])
        if "interf" in w:
            other = _estimate(mode, model, w["mix"], w["enroll_interf"], w["interf"])
            item.si_sdri_partner = _partner(w["mix"], other, w["interf"])
        report.items.append(item)
    return report


def _partner(mix, est, ref) -> float:
    a, b = si_sdr(ref, est), si_sdr(ref, mix)
    return 0.0 if a == b else a - b

