import numpy as np
import pytest

from dcfnet.synthdata import build_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """8 train / 3 test clean mixtures of 0.5 s; shared by the train/eval/cli tests."""
    out = tmp_path_factory.mktemp("tiny")
    build_dataset(8, 3, 4, "clean", 3, out, duration=0.5, enroll_duration=0.5)
    return out / "manifest.jsonl"


def fd_grad(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central differences of scalar ``f`` w.r.t. every entry of ``x`` (modified in place, restored)."""
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * h)
    return g


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion recorded by tests/test_acceptance.py."""
    lines = []
    for key in ("passed", "failed", "skipped"):
        for rep in terminalreporter.stats.get(key, []):
            if "test_acceptance" not in getattr(rep, "nodeid", "") or rep.when not in ("call", "setup"):
                continue
            found = [v for k, v in getattr(rep, "user_properties", []) if k == "acceptance"]
            pos, test = rep.location[1], rep.nodeid.split("::")[-1]
            if found:
                lines += [(pos, f"{'PASS' if ok else 'FAIL'}  {name}: {detail}") for name, ok, detail in found]
            elif rep.skipped:
                reason = rep.longrepr[2] if isinstance(rep.longrepr, tuple) else ""
                lines.append((pos, f"SKIP  {test}: {reason}"))
            elif rep.failed:
                lines.append((pos, f"FAIL  {test}: raised before reporting"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines, key=lambda x: x[0]):
            terminalreporter.write_line(line)
