import numpy as np
import pytest
from hypothesis import settings

from poisonlab.datagen import Rng, make_task

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def sdd_task():
    return make_task("sdd", 0)


@pytest.fixture
def dense_task():
    return make_task("dense", 0)


def random_sdd(seed, n=20):
    from poisonlab.datagen import sdd_matrix

    return sdd_matrix(Rng(seed), n, 0.3, 1.0)
