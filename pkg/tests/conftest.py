import numpy as np
import pytest

from dmdrate.bath import SpectralDensity, correlation_expansion
from dmdrate.kernels import POPULATION, ProjectorKind, extract_kernel
from dmdrate.propagator import SIGMA_X, SIGMA_Z, EtHamiltonian, build_hierarchy

_ACCEPTANCE = []


def record(criterion, ok, detail):
    """Log one acceptance line; printed again in the terminal summary."""
    line = f"ACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} {detail}"
    print(line)
    _ACCEPTANCE.append(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def fig1_H():
    return EtHamiltonian.explicit(SIGMA_X + SIGMA_Z)


@pytest.fixture(scope="session")
def fig1_space():
    exp = correlation_expansion(SpectralDensity.drude(1.0, 1.0), 1.0, 6)
    return build_hierarchy([exp], 6)


@pytest.fixture(scope="session")
def fig1_grid():
    return np.arange(601) * 0.01


@pytest.fixture(scope="session")
def fig1_kernels(fig1_space, fig1_H, fig1_grid):
    return extract_kernel(fig1_space, fig1_H, ProjectorKind(POPULATION), fig1_grid)


@pytest.fixture(scope="session")
def small_space():
    """Cheap Drude hierarchy for structural checks."""
    exp = correlation_expansion(SpectralDensity.drude(1.0, 1.0), 1.0, 2)
    return build_hierarchy([exp], 3)
