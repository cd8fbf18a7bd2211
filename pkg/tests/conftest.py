import numpy as np
import pytest

from convexdr.shapes import AXES


@pytest.fixture
def cube_planes():
    """Side-2 cube centred at the origin as a (6, 4) plane array."""
    return np.column_stack([AXES, np.ones(6)])


def random_planes(rng, k, bmin=0.5, bmax=1.5):
    n = rng.normal(size=(k, 3))
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    return n, rng.uniform(bmin, bmax, size=k)
