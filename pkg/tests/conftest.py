import math

import numpy as np
import pytest

from contactflow.params import PhysicalParams
from contactflow import equilibrium as eq
from contactflow import geometry as geo
from contactflow import flow as fl


@pytest.fixture(scope="session")
def params():
    return PhysicalParams()


@pytest.fixture(scope="session")
def flat_surface(params):
    return eq.solve_equilibrium(params, 1.0)


@pytest.fixture(scope="session")
def grid(flat_surface, params):
    return geo.make_grid(flat_surface, 24, 16, params.depth)


@pytest.fixture(scope="session")
def zero_fields(grid):
    return geo.build_geometry(grid, np.zeros(grid.nx))


@pytest.fixture(scope="session")
def problem(params, flat_surface, grid):
    return fl.CoupledProblem(params=params, surface=flat_surface, grid=grid)


@pytest.fixture()
def cos_eta(grid):
    """Zero-mean single-mode perturbation at cell centers."""
    eta = 1e-3 * np.cos(math.pi * grid.xc / grid.ell)
    return eta - eta.mean()
