import numpy as np
import pytest

from evolve import Trajectory
from grid import Field, Grid
from soliton import SolitonFamily


@pytest.fixture(scope="session")
def grid():
    """Default experiment grid for p = 2."""
    return Grid(2048, 200.0)


@pytest.fixture(scope="session")
def small_grid():
    return Grid(1024, 100.0)


@pytest.fixture(scope="session")
def fam2():
    return SolitonFamily(2, 1.0)


@pytest.fixture(scope="session")
def fam3():
    return SolitonFamily(3, 1.0)


@pytest.fixture
def gaussian():
    def make(grid, amplitude=1.0, width=1.0, center=0.0):
        return Field.from_function(grid, lambda y: amplitude * np.exp(-((y / width) ** 2)), center)

    return make


@pytest.fixture
def zero_trajectory(small_grid):
    traj = Trajectory(p=2)
    for t in (0.0, 0.5, 1.0):
        traj.record(t, Field.zeros(small_grid))
    return traj
