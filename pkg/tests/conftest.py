import numpy as np
import pytest

from aapt import statesim as ss

ACCEPTANCE_LINES = []


def random_complex(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_hermitian(rng, d):
    G = random_complex(rng, d, d)
    return (G + G.conj().T) / 2


def random_density(rng, d):
    G = random_complex(rng, d, d)
    rho = G @ G.conj().T
    return rho / np.trace(rho).real


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def cube2():
    return ss.cube_measurements(2)


@pytest.fixture(scope="session")
def bell():
    return ss.maximally_entangled_state(2)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
