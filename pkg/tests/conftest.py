import numpy as np
import pytest

from puschpool.cluster import get_topology


def crandn(rng, shape, var=1.0):
    """Circular complex Gaussian samples of variance ``var``, complex64."""
    z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return (np.sqrt(var / 2) * z).astype(np.complex64)


def random_spd64(rng, n):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return (a @ a.conj().T + n * np.eye(n)).astype(np.complex64)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def mempool():
    return get_topology("mempool")


@pytest.fixture(scope="session")
def terapool():
    return get_topology("terapool")


@pytest.fixture(scope="session")
def desk16():
    return get_topology("desk16")


@pytest.fixture(scope="session")
def desk64():
    return get_topology("desk64")


# one line per acceptance criterion, printed at the end of every session
ACCEPTANCE_LINES = []


def report_criterion(label, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] {label}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
