import numpy as np
import pytest

from sivcm.estimation import Dataset
from sivcm.simulation import SimConfig, simulate_dataset

ACCEPTANCE_LINES = []


def record(criterion: str, ok: bool, detail: str = ""):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def model_data(n=100, seed=0, replicate=0):
    return simulate_dataset(SimConfig(n=n, base_seed=seed), replicate)


@pytest.fixture
def data100():
    return model_data(100, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def linear_data(n=80, seed=1, noise=0.0):
    """Y = (1 + 2u) z1 + (-1 + u) z2 with u = beta'X, beta = (0.6, 0.8)."""
    r = np.random.default_rng(seed)
    X = r.uniform(-1, 1, (n, 2))
    Z = np.column_stack([np.ones(n), r.standard_normal(n)])
    u = X @ np.array([0.6, 0.8])
    Y = (1 + 2 * u) * Z[:, 0] + (-1 + u) * Z[:, 1] + noise * r.standard_normal(n)
    return Dataset(Y, X, Z)
