import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from commonfpc.core import GridFunction

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

S2 = math.sqrt(2)


def sin2(t):
    return S2 * np.sin(2 * np.pi * t)


def cos2(t):
    return S2 * np.cos(2 * np.pi * t)


def grid_fn(func, size=501, lo=0.0, hi=1.0):
    return GridFunction.from_callable(func, size, (lo, hi))


def fine_quad(func, lo=0.0, hi=1.0, m=200_001):
    """High-resolution Simpson oracle, independent of the package's quadrature."""
    x = np.linspace(lo, hi, m)
    y = func(x)
    h = (hi - lo) / (m - 1)
    return h / 3 * (y[0] + y[-1] + 4 * y[1:-1:2].sum() + 2 * y[2:-1:2].sum())


def assert_score_moments(fit):
    s = fit.scores
    lam1 = max(fit.eigenvalues[0], 1e-300)
    assert np.all(np.abs(s.mean(axis=0)) <= 1e-8 * max(1.0, np.sqrt(lam1)))
    cov = s.T @ s / fit.n
    assert np.allclose(cov, np.diag(fit.eigenvalues), atol=1e-8 * lam1)
    assert np.all(np.diff(fit.eigenvalues) <= 1e-12) and np.all(fit.eigenvalues >= 0)
    good = [g for g in fit.eigenfunctions if g is not None]
    if good:
        v = np.vstack([g.values for g in good])
        w = good[0].weights
        assert np.allclose((v * w) @ v.T, np.eye(len(good)), atol=1e-6)
        for row in v:
            assert row[np.argmax(np.abs(row))] > 0


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one summary line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE: dict = {}
ACCEPTANCE_COUNT = 10


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in range(1, ACCEPTANCE_COUNT + 1):
        terminalreporter.write_line(ACCEPTANCE.get(k, f"criterion {k:2d} FAIL  did not complete"))
