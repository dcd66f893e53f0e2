import numpy as np
import pytest

from exactq import AlgorithmParams, DiscreteLaw, LatticePareto, degenerate


def philox(seed):
    return np.random.Generator(np.random.Philox(seed))


@pytest.fixture
def rng():
    return philox(20240611)


@pytest.fixture(scope="session")
def light_law():
    return LatticePareto(7, 3, 0.1)


@pytest.fixture(scope="session")
def heavy_law():
    return LatticePareto(2.9, 0.85, 0.1)


@pytest.fixture(scope="session")
def light_params():
    return AlgorithmParams(mu=1.0, m=16, L=1.1, alpha=4, gamma=1.7, delta=0.38)


@pytest.fixture(scope="session")
def toy_law():
    # three atoms, X - mu on the integer lattice for mu = 1
    return DiscreteLaw([-1, 0, 2], [0.5, 0.25, 0.25])


@pytest.fixture(scope="session")
def zero_law():
    return degenerate()


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS, key=lambda s: s.split()[1]):
            terminalreporter.write_line(line)
