import numpy as np
import pytest

from streamfem import build_space, build_structured_mesh
from streamfem.cip import assemble_cip


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def space_n4_l2():
    return build_space(build_structured_mesh(4), 2)


@pytest.fixture(scope="session")
def space_n8_l2():
    return build_space(build_structured_mesh(8), 2)


@pytest.fixture(scope="session")
def form_n8_l2(space_n8_l2):
    return assemble_cip(space_n8_l2)
