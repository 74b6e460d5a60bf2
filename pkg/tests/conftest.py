import numpy as np
import pytest

from partiallab.rng import Rng


@pytest.fixture
def rng():
    return Rng(12345)


def random_labels(rng, shape, p_unknown=0.3):
    u = rng.uniform(shape)
    y = np.where(rng.uniform(shape) < 0.5, 1, -1)
    return np.where(u < p_unknown, 0, y).astype(np.int8)
