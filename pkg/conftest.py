import numpy as np
import pytest

from mindisk.families import helicoid_disk, rescaled_catenoids, rescaled_helicoids
from mindisk.surface_core import ANALYTIC, graph_preset, make_catenoid, make_helicoid


@pytest.fixture
def helicoid_patch():
    return make_helicoid((-1.0, 1.0), (0.0, 2.0 * np.pi), 32, 32, ANALYTIC)


@pytest.fixture
def catenoid_patch():
    return make_catenoid((-1.0, 1.0), (0.0, 2.0 * np.pi), 32, 32, ANALYTIC)


@pytest.fixture
def paraboloid_patch():
    return graph_preset("paraboloid", 256, 256)


@pytest.fixture(scope="session")
def small_helicoid_disk():
    """a = 0.01 helicoid in the unit ball, coarse in t"""
    return helicoid_disk(0.01, 1.0, n_per_turn=16, half_count=32)


@pytest.fixture(scope="session")
def helicoid_sequence():
    return rescaled_helicoids(6)


@pytest.fixture(scope="session")
def catenoid_sequence():
    return rescaled_catenoids(6)
