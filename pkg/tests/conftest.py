import numpy as np
import pytest

from qnetopt.layout import SystemLayout


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def one_step():
    return SystemLayout.of(("0", 2, "in", 1), ("1", 2, "out", 1))


@pytest.fixture
def two_step():
    return SystemLayout.of(("0", 2, "in", 1), ("1", 2, "out", 1), ("2", 2, "in", 2), ("3", 2, "out", 2))


def bell_state() -> np.ndarray:
    v = np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)
    return np.outer(v, v.conj())
