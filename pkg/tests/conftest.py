import numpy as np
import pytest

from femspde.elements import build_element
from femspde.tensors import compute_reference_tensors


@pytest.fixture(scope="session")
def hat1d():
    return build_element("hat1d")


@pytest.fixture(scope="session")
def tensor2():
    return build_element("tensor(2)")


@pytest.fixture(scope="session")
def triangle2d():
    return build_element("triangle2d")


@pytest.fixture(scope="session")
def hat1d_tensors(hat1d):
    return compute_reference_tensors(hat1d)


@pytest.fixture(scope="session")
def tensor2_tensors(tensor2):
    return compute_reference_tensors(tensor2)


@pytest.fixture(scope="session")
def triangle2d_tensors(triangle2d):
    return compute_reference_tensors(triangle2d)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
