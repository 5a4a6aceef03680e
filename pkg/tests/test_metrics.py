import math

import numpy as np
import pytest

from conftest import fd_grad
from dcfnet.autograd import Tensor
from dcfnet.metrics import EvalItem, EvalReport, improvements, read_eval_csv, sdr, si_sdr, si_sdr_loss, tcp_rate


def orthogonal_noise(rng, s, snr_db):
    n = rng.standard_normal(s.size)
    n -= n.mean()
    n -= (n @ s) / (s @ s) * s
    return n * np.sqrt((s @ s) / (n @ n) / 10 ** (snr_db / 10))


def zero_mean(rng, n=1000):
    s = rng.standard_normal(n)
    return s - s.mean()


def test_orthogonal_noise_gives_ten_db(rng):
    s = zero_mean(rng)
    assert si_sdr(s, s + orthogonal_noise(rng, s, 10.0)) == pytest.approx(10.0, abs=1e-6)


def test_rescaled_reference_is_infinite(rng):
    s = zero_mean(rng)
    assert si_sdr(s, -3.7 * s) == math.inf
    assert si_sdr(s, s) == math.inf


def test_orthogonal_estimate_is_minus_infinity():
    s = np.array([1.0, -1.0, 1.0, -1.0])
    assert si_sdr(s, np.array([1.0, 1.0, -1.0, -1.0])) == -math.inf


@pytest.mark.parametrize("alpha", [1e-3, 0.5, -2.0, 1e4])
def test_scale_invariance(rng, alpha):
    s, est = rng.standard_normal(500), rng.standard_normal(500)
    assert si_sdr(s, alpha * est) == pytest.approx(si_sdr(s, est), abs=1e-9)


def test_mean_invariance(rng):
    s, est = rng.standard_normal(500), rng.standard_normal(500)
    assert si_sdr(s, est + 3.0) == pytest.approx(si_sdr(s, est), abs=1e-9)


def test_metric_errors(rng):
    with pytest.raises(ValueError):
        si_sdr(np.ones(4), np.ones(5))
    with pytest.raises(ValueError):
        si_sdr(np.zeros(4), np.ones(4))
    with pytest.raises(ValueError):
        sdr(np.zeros(4), np.ones(4))


def test_sdr_energy_ratio(rng):
    s = rng.standard_normal(100)
    e = 0.1 * rng.standard_normal(100)
    assert sdr(s, s + e) == pytest.approx(10 * np.log10((s @ s) / (e @ e)), rel=1e-12)
    assert sdr(s, s) == math.inf


def test_loss_at_perfect_estimate_is_large_and_finite(rng):
    s = rng.standard_normal(64)
    val = si_sdr_loss(s, Tensor(s.copy())).item()
    assert math.isfinite(val) and val <= -80.0


def test_loss_gradient_matches_finite_differences(rng):
    s = rng.standard_normal(64)
    est = Tensor(s + 0.3 * rng.standard_normal(64), requires_grad=True)
    si_sdr_loss(s, est).backward()
    num = fd_grad(lambda: si_sdr_loss(s, Tensor(est.data)).item(), est.data)
    err = np.max(np.abs(est.grad - num) / np.maximum(np.maximum(np.abs(est.grad), np.abs(num)), 1e-12))
    assert err < 1e-6


def test_loss_matches_metric(rng):
    s = rng.standard_normal((3, 200))
    est = s + 0.5 * rng.standard_normal((3, 200))
    expected = -np.mean([si_sdr(a, b) for a, b in zip(s, est)])
    assert si_sdr_loss(s, Tensor(est)).item() == pytest.approx(expected, abs=1e-6)


def test_identity_system_scores_zero(rng):
    s = rng.standard_normal(400)
    mix = s + rng.standard_normal(400)
    it = improvements(mix, mix.copy(), s)
    assert it.si_sdri == 0.0 and it.sdri == 0.0 and not it.confused


def test_oracle_system_hits_ceiling(rng):
    s = rng.standard_normal(400)
    it = improvements(s + rng.standard_normal(400), s.copy(), s)
    assert it.si_sdri == math.inf and it.sdri == math.inf


def test_zero_db_orthogonal_mixture(rng):
    s = zero_mean(rng)
    mix = s + orthogonal_noise(rng, s, 0.0)
    est = s + orthogonal_noise(rng, s, 12.0)
    it = improvements(mix, est, s)
    assert it.si_sdr_mix == pytest.approx(0.0, abs=1e-9)
    assert it.si_sdri == pytest.approx(it.si_sdr_est, abs=1e-9)


def _items(values):
    return [EvalItem(str(i), 0.0, v, v, v, v < 0) for i, v in enumerate(values)]


def test_tcp_rate_reference_case():
    values = [5.0] * 996 + [-1.0] * 4
    assert tcp_rate(_items(values)) == 0.004


def test_tcp_rate_extremes():
    assert tcp_rate(_items([0.0, 3.0])) == 0.0
    assert tcp_rate(_items([-0.1, -3.0])) == 1.0
    with pytest.raises(ValueError):
        tcp_rate([])


def test_tcp_rate_matches_brute_force(rng):
    for _ in range(50):
        values = rng.normal(2.0, 4.0, int(rng.integers(1, 300)))
        count = 0
        for v in values:
            if v < 0:
                count += 1
        assert tcp_rate(_items(values)) == count / len(values)


def test_report_csv_round_trip(tmp_path):
    rep = EvalReport(_items([1.5, -2.0, 4.0]))
    rep.items[0].si_sdri_partner = 3.0
    rep.write_csv(tmp_path / "e.csv")
    rep.write_scatter_csv(tmp_path / "s.csv")
    rows, footer = read_eval_csv(tmp_path / "e.csv")
    assert [r["id"] for r in rows] == ["0", "1", "2"]
    assert float(footer["si_sdri"]) == pytest.approx(3.5 / 3)
    assert float(footer["confused"]) == pytest.approx(1 / 3)
    assert len((tmp_path / "s.csv").read_text().splitlines()) == 4
