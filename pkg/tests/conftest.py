import numpy as np
import pytest

from src.features.riesz import ProblemParams
from src.features.spectral import GridSpec
from src.models.solver import SolverConfig, solve_ground_state


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def grid_1d():
    return GridSpec(1, 16, 2 * np.pi)


@pytest.fixture
def grid_2d():
    return GridSpec(2, 32, 16.0)


@pytest.fixture
def params():
    return ProblemParams(2, 1.0, 2.0)


@pytest.fixture(scope="session")
def small_ground_state():
    """N=2, alpha=1, p=2 on L=16, M=32 to 1e-9"""
    params = ProblemParams(2, 1.0, 2.0)
    grid = GridSpec(2, 32, 16.0)
    return solve_ground_state("gaussian", params, SolverConfig(tol=1e-9, max_iter=3000), grid=grid)
