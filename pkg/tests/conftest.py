import re

import numpy as np
import pytest

from asapnas import tensor as tn


def numeric_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of the scalar function ``f`` at ``x``."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f(x)
        x[i] = old - h
        fm = f(x)
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_err(a, b, floor: float = 1e-8) -> float:
    """``||a - b|| / max(||a||, ||b||)``; the floor only guards exact zeros."""
    a, b = np.ravel(np.asarray(a, float)), np.ravel(np.asarray(b, float))
    scale = max(np.linalg.norm(a), np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / scale)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance criteria report one line each; shown in the terminal summary
ACCEPTANCE: list[str] = []


@pytest.fixture
def criterion():
    def record(label: str, passed: bool, detail: str) -> None:
        ACCEPTANCE.append(f"criterion {label}: {'PASS' if passed else 'FAIL'}  {detail}")
        assert passed, f"criterion {label}: {detail}"
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: (int(re.match(r"\d+", s.split()[1])[0]), s)):
            terminalreporter.write_line(line)
