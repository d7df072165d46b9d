import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from qlwave.solver import EvolutionConfig, Grid1D, ModeState, evolve_linear, gaussian_pulse

settings.register_profile(
    "qlwave", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("qlwave")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def schw_run():
    """Short l = 2 Schwarzschild run used by several norm tests."""
    g = Grid1D.with_spacing(-40.0, 160.0, 0.1, 1.0)
    init = ModeState(2, gaussian_pulse(g.nodes, -5.0, 1.5), np.zeros(g.n))
    cfg = EvolutionConfig(cfl=0.5, scheme="mol_rk4_fd4", t_end=100.0, record_every=4)
    return evolve_linear(1.0, 2, g, init, cfg)


@pytest.fixture(scope="session")
def flat_run():
    g = Grid1D.with_spacing(0.0, 200.0, 0.1, 0.0)
    psi0 = gaussian_pulse(g.nodes, 10.0, 1.5) * (g.nodes > 0)
    cfg = EvolutionConfig(cfl=0.5, scheme="mol_rk4_fd4", bc_left="reflecting", t_end=120.0, record_every=4)
    return evolve_linear(0.0, 0, g, ModeState(0, psi0, np.zeros(g.n)), cfg)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
