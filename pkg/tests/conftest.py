import numpy as np
import pytest

from gfc import Grid, ObservableSet, PotentialSpec, eigendecompose, gibbs_state, laplacian_G


class GaussianCase:
    """Quadratic potential with mu = beta = 1 on [-10, 10], n = 2001."""

    def __init__(self, mu=1.0, beta=1.0, n=2001, k=32):
        self.mu, self.beta = mu, beta
        half = 10.0 * np.sqrt(mu / beta)
        self.potential = PotentialSpec.quadratic(mu, beta)
        self.grid = Grid(-half, half, n)
        self.gibbs = gibbs_state(self.potential, self.grid)
        self.lap = laplacian_G(self.gibbs)
        self.spec = eigendecompose(self.lap, k=k)
        self.B = ObservableSet.from_expressions(["x"], self.grid)
        self.x = self.grid.x


@pytest.fixture(scope="session")
def gaussian():
    return GaussianCase()


@pytest.fixture(scope="session")
def quartic():
    potential = PotentialSpec.polynomial([0.0, 0.3, 0.0, 0.0, 0.25])
    grid = Grid(-4.0, 4.0, 1001)
    gibbs = gibbs_state(potential, grid)
    lap = laplacian_G(gibbs)
    return {
        "potential": potential,
        "grid": grid,
        "gibbs": gibbs,
        "lap": lap,
        "spec": eigendecompose(lap, k=12),
        "B": ObservableSet.from_expressions(["x"], grid),
    }


@pytest.fixture
def rng():
    return np.random.default_rng(20240531)


# acceptance criteria append (label, passed, detail) here; printed after the run
ACCEPTANCE_LOG: list[tuple[str, bool, str]] = []


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LOG


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LOG:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in sorted(ACCEPTANCE_LOG, key=lambda r: r[0]):
        terminalreporter.write_line(f"{label}: {'PASS' if ok else 'FAIL'}  {detail}")
