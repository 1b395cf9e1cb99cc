import numpy as np
import pytest

from critgwi.models import FiniteModel, HeavyModel, VeryHeavyModel, kappa_for_q0


@pytest.fixture(scope="session")
def m1():
    return HeavyModel(nu=0.3, delta=0.7, c1=0.5, c2=1.0)


@pytest.fixture(scope="session")
def m1_partial():
    # c2 < 1 puts mass on eta = 0, so the stationary law charges 0
    return HeavyModel(nu=0.3, delta=0.7, c1=0.5, c2=0.8)


@pytest.fixture(scope="session")
def m2():
    return VeryHeavyModel(a=1.0, delta=0.6, kappa=kappa_for_q0(1.0, 0.5), cc=0.5)


@pytest.fixture(scope="session")
def toy():
    # critical toy law: 0.375 + 2 * 0.125 + 3 * 0.125 = 1
    return FiniteModel(xi=(0.375, 0.375, 0.125, 0.125), eta=(0.4, 0.35, 0.25))


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    return request.config.stash.setdefault(_ACCEPTANCE, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
