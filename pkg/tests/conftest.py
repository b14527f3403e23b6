import numpy as np
import pytest

from contrast_lab import Shape, generate_separated, init_params
from contrast_lab.rng import RngState


@pytest.fixture(scope="session")
def small_data():
    return generate_separated(RngState(seed=7).child("data"), 6, 8, 0.5)


@pytest.fixture(scope="session")
def small_shape():
    return Shape(L=3, m=32, d=8, b=8)


@pytest.fixture(scope="session")
def small_nets(small_shape):
    root = RngState(seed=7)
    return (
        init_params(root.child("query-net"), small_shape),
        init_params(root.child("key-net"), small_shape),
    )


@pytest.fixture
def gen():
    return np.random.default_rng(123)
