import numpy as np
import pytest

from rotmhd.grid import GridSpec


@pytest.fixture(scope="session")
def g32():
    return GridSpec(32)


@pytest.fixture(scope="session")
def g64():
    return GridSpec(64)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
