import numpy as np
import pytest
from hypothesis import settings

from concavefusion.model import make_dataset

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def small_dataset(n=12, p=1, q=2, seed=0, sigma=0.3, effects=(2.0, -2.0)):
    """Two-group heterogeneous data with an intercept plus q - 1 normal covariates."""
    rng = np.random.default_rng(seed)
    Zr = rng.standard_normal((n, q - 1))
    X = rng.standard_normal((n, p))
    labels = np.arange(n) % len(effects)
    beta = np.array(effects)[labels][:, None] * np.ones(p)
    eta = rng.uniform(1, 2, q)
    y = eta[0] + Zr @ eta[1:] + np.einsum("ij,ij->i", X, beta) + sigma * rng.standard_normal(n)
    return make_dataset(y, X, Zr if q > 1 else None), labels


@pytest.fixture
def tiny():
    return small_dataset()


ACCEPTANCE_LINES = []


def record_acceptance(name, ok, detail):
    """Register one acceptance-criterion outcome for the end-of-run summary."""
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
