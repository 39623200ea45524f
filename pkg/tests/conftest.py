import numpy as np
import pytest

from polymerlab.mollifier import KernelSpec


@pytest.fixture(scope="session")
def bump():
    return KernelSpec(3, "bump", 1.0)


@pytest.fixture(scope="session")
def indicator():
    return KernelSpec(3, "indicator", 1.0)


@pytest.fixture
def gen():
    return np.random.default_rng(20240611)
