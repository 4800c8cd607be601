import numpy as np
import pytest

from kwc.grid import Field, Grid2D


@pytest.fixture
def grid8():
    return Grid2D(8, 8)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def smooth_pair(grid: Grid2D, eta_amp: float = 0.5, theta_amp: float = 0.8):
    """Low-frequency initial pair respecting both boundary conditions."""
    X, Y = grid.xy
    xh, yh = X / grid.lx, Y / grid.ly
    eta = Field(grid, eta_amp * (np.cos(np.pi * xh) * np.cos(np.pi * yh)
                                 + 0.6 * np.cos(2 * np.pi * xh)))
    theta = Field.dirichlet(grid, theta_amp * np.sin(np.pi * xh) * np.sin(np.pi * yh))
    return eta, theta


@pytest.fixture
def smooth8(grid8):
    return smooth_pair(grid8)
