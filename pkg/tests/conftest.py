import numpy as np
import pytest

from planar_leray.geometry import RegionSpec, make_polar_grid


@pytest.fixture(scope="session")
def grid16():
    return make_polar_grid(1.0, 16, 32)


@pytest.fixture(scope="session")
def grid32():
    return make_polar_grid(1.0, 32, 64)


@pytest.fixture(scope="session")
def omega_small():
    return RegionSpec.disk((0.1, 0.0), 0.3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
