import math

import numpy as np
import pytest

from bestprox.maps import day_example_map, day_pair
from bestprox.spaces import BlockVector


def day_norm_oracle(blocks):
    """Day norm straight from the definition, on a list of lists."""
    return math.sqrt(sum(sum(abs(t) for t in block) ** 2 for block in blocks))


def leading_vector(values, depth):
    lead = np.zeros(depth)
    lead[: len(values)] = values
    return BlockVector.from_leading(lead, depth)


@pytest.fixture(scope="session")
def pair32():
    return day_pair(32)


@pytest.fixture(scope="session")
def T32(pair32):
    return day_example_map(pair32)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
