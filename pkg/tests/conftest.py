import numpy as np
import pytest

from elastostab.elasticity import MaterialParams, ReferenceState
from elastostab.grid import Grid, ScalarField, VectorField


def unit_grid(n: int, snapshots: int = 0, dt=None) -> Grid:
    return Grid.unit_cube(n, snapshots, dt)


def vector_from(grid: Grid, fn) -> VectorField:
    x1, x2, x3 = grid.mesh()
    return VectorField(grid, np.stack([np.broadcast_to(c, grid.dims) for c in fn(x1, x2, x3)]))


def scalar_from(grid: Grid, fn) -> ScalarField:
    x1, x2, x3 = grid.mesh()
    return ScalarField(grid, np.broadcast_to(fn(x1, x2, x3), grid.dims))


def make_state(n: int, displacements, mu=lambda x1, x2, x3: 1.0 + 0 * x1,
               lam=lambda x1, x2, x3: 0 * x1, rho=lambda x1, x2, x3: 1.0 + 0 * x1) -> ReferenceState:
    g = unit_grid(n)
    params = MaterialParams(scalar_from(g, lam), scalar_from(g, mu), scalar_from(g, rho))
    return ReferenceState(params, [vector_from(g, d) for d in displacements])


# Smooth nonsingular-strain displacements used across modules.
U_SEP = lambda x1, x2, x3: (x1 + 0.3 * x1**2, 0.8 * x2 + 0.1 * x1 * x3, 1.2 * x3)  # noqa: E731
U_CROSS = lambda x1, x2, x3: (x1 + 0.2 * x2 * x3, x2 + 0.3 * x1 * x3, x3 + 0.25 * x1 * x2)  # noqa: E731
U_SHEAR = lambda x1, x2, x3: (x1 + 0.5 * x2, 1.3 * x2 + 0.2 * x1**2, 0.7 * x3 + 0.4 * x1)  # noqa: E731


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
