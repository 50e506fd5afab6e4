import numpy as np
import pytest

from treesched.model import LinearSystem, SensorTree


@pytest.fixture
def scalar_system():
    """The one-sensor integrator demo: A = Q = C = r = Sigma0 = 1."""
    return LinearSystem(A=[[1.0]], Q=[[1.0]], C=[[1.0]], r=[1.0], Sigma0=[[1.0]])


@pytest.fixture
def scalar_tree():
    return SensorTree(parent=[0], cost=[1.0])


@pytest.fixture
def chain3_tree():
    """0 <- 1 <- 2 <- 3 with unit costs."""
    return SensorTree(parent=[0, 1, 2], cost=[1.0, 1.0, 1.0])


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
