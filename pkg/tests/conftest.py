import numpy as np
import pytest

from ipwsurv.dataset import Dataset


def brute_force_c_index(times, events, predictions):
    """Direct O(n^2) pair enumeration; returns (value, pairs) or (None, 0)."""
    num = 0.0
    pairs = 0
    n = len(times)
    for i in range(n):
        if not events[i]:
            continue
        for j in range(n):
            if times[i] < times[j]:
                pairs += 1
                if predictions[i] < predictions[j]:
                    num += 1.0
                elif predictions[i] == predictions[j]:
                    num += 0.5
    return (num / pairs if pairs else None), pairs


@pytest.fixture
def small_dataset():
    rng = np.random.default_rng(3)
    n = 60
    x = rng.standard_normal((n, 3))
    z = (rng.random(n) < 0.5).astype(int)
    t = np.exp(0.5 + x[:, 0] - 0.3 * z + 0.2 * rng.standard_normal(n))
    d = (rng.random(n) < 0.7).astype(int)
    return Dataset(x, z, t, d)


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance PASS/FAIL lines (captured stdout) at the end of the run."""
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if rep.when == "call" and "test_acceptance" in rep.nodeid:
                lines += [ln for ln in rep.capstdout.splitlines() if ln.startswith(("PASS ", "FAIL "))]
    if lines:
        terminalreporter.write_sep("=", "acceptance scorecard")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
