import pytest

from seirda.config import RunConfig
from seirda.integrator import simulate
from seirda.model import Compartments, MedicalParams

from .helpers import make_series

TOKYO_N = 13_955_000.0


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the numba kernels once so timing checks measure steady-state cost."""
    c = Compartments.seeded(1000.0, E=1.0)
    simulate(c, MedicalParams(beta_s=0.3), 2)


@pytest.fixture
def tokyo_initial():
    return Compartments.seeded(TOKYO_N, E=120.0, Ia=60.0, Is=80.0, H=30.0, R=12.0, D=1.0,
                               Ra=6.0, Rs=13.0)


@pytest.fixture
def default_params():
    return MedicalParams(beta_s=0.5, gamma_H=0.1, gamma_D=0.002)


@pytest.fixture
def toy_series():
    return make_series()


@pytest.fixture
def small_cfg():
    return RunConfig(population=TOKYO_N, ensemble_size=20)


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if not test_acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, (status, detail) in sorted(test_acceptance.RESULTS.items()):
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {detail}")
