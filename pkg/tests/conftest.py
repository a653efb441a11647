import numpy as np
import pytest

from measopt import build_lshape_mesh, build_square_mesh


@pytest.fixture(scope="session")
def lshape4():
    return build_lshape_mesh(4)


@pytest.fixture(scope="session")
def lshape8():
    return build_lshape_mesh(8)


@pytest.fixture(scope="session")
def square2():
    return build_square_mesh(2)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)
