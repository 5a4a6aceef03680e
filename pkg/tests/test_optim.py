import math

import numpy as np
import pytest

from dcfnet.optim import OptimizerState, Schedule, adamw_step, clip_grad_norm, global_norm, lr_at

FULL_RUN = Schedule(5e-4, 5, 150)


def test_lr_reference_points():
    assert lr_at(5, FULL_RUN) == 5e-4
    assert abs(lr_at(150, FULL_RUN)) < 1e-12
    assert lr_at(2.5, FULL_RUN) == pytest.approx(2.5e-4, rel=1e-12)
    assert lr_at(0, FULL_RUN) == 0.0


def test_lr_continuous_at_junction():
    eps = 1e-9
    assert lr_at(5 - eps, FULL_RUN) == pytest.approx(5e-4, abs=1e-12)
    assert lr_at(5 + eps, FULL_RUN) == pytest.approx(5e-4, abs=1e-12)


def test_lr_monotone_pieces():
    ramp = [lr_at(e, FULL_RUN) for e in np.linspace(0, 5, 50)]
    decay = [lr_at(e, FULL_RUN) for e in np.linspace(5, 150, 200)]
    assert np.all(np.diff(ramp) > 0) and np.all(np.diff(decay) < 0)


def test_lr_out_of_range():
    with pytest.raises(ValueError):
        lr_at(-0.1, FULL_RUN)
    with pytest.raises(ValueError):
        lr_at(151, FULL_RUN)
    with pytest.raises(ValueError):
        Schedule(1e-3, 10, 10)


def _scalar_state(w, wd):
    p = {"w": np.array([w])}
    return p, OptimizerState.for_params(p, weight_decay=wd)


def test_first_step_size():
    p, st = _scalar_state(0.0, 0.0)
    adamw_step(p, {"w": np.array([1.0])}, st, 1e-3)
    assert p["w"][0] == pytest.approx(-1e-3 / (1 + 1e-8), abs=1e-18)


def test_pure_decoupled_decay():
    p, st = _scalar_state(2.0, 0.01)
    adamw_step(p, {"w": np.array([0.0])}, st, 1e-3)
    assert p["w"][0] == pytest.approx(2.0 * (1 - 1e-5), abs=1e-15)


def _reference_adamw(w, grads, lr, wd, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    out = []
    for t, g in enumerate(grads, 1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat, vhat = m / (1 - b1 ** t), v / (1 - b2 ** t)
        w = w - lr * mhat / (math.sqrt(vhat) + eps) - lr * wd * w
        out.append(w)
    return out


def test_trajectory_matches_scalar_reference(rng):
    grads = rng.standard_normal(10)
    p, st = _scalar_state(0.7, 0.0)
    traj = []
    for g in grads:
        adamw_step(p, {"w": np.array([g])}, st, 1e-2)
        traj.append(p["w"][0])
    np.testing.assert_allclose(traj, _reference_adamw(0.7, grads, 1e-2, 0.0), atol=1e-12, rtol=0)


def test_misaligned_gradients_rejected():
    p, st = _scalar_state(1.0, 0.0)
    with pytest.raises(KeyError):
        adamw_step(p, {"x": np.array([1.0])}, st, 1e-3)
    with pytest.raises(ValueError):
        adamw_step(p, {"w": np.array([1.0, 2.0])}, st, 1e-3)


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_clip_bounds_global_norm(rng, dtype):
    for scale in (0.1, 3.0, 50.0, 1e4):
        grads = {f"g{i}": (scale * rng.standard_normal(int(rng.integers(1, 200)))).astype(dtype) for i in range(6)}
        before = global_norm(grads)
        returned = clip_grad_norm(grads, 5.0)
        assert returned == pytest.approx(before)
        assert global_norm(grads) <= 5.0 + 1e-9
        if before <= 5.0:
            assert global_norm(grads) == before
