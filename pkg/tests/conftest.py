import numpy as np
import pytest

from scatterlen import Gaussian, assemble_riesz, build_grid, eval_potential


@pytest.fixture(scope="session")
def grid_256():
    return build_grid(1, 0.6, (-4.0, 4.0), 256)


@pytest.fixture(scope="session")
def kernel_256(grid_256):
    return assemble_riesz(grid_256)


@pytest.fixture(scope="session")
def gaussian_256(grid_256):
    return eval_potential(Gaussian(center=(0.0,), width=0.5, amplitude=1.0), grid_256)


@pytest.fixture(scope="session")
def grid_2d():
    return build_grid(2, 1.0, ((-2.0, 2.0), (-2.0, 2.0)), 20)


@pytest.fixture(scope="session")
def kernel_2d(grid_2d):
    return assemble_riesz(grid_2d)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
