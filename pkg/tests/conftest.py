import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def rand_tensor(rng, n=1, c=3, h=7, w=7, scale=1.0):
    """Seeded float32 NCHW tensor with values in [-scale, scale]."""
    return (rng.uniform(-scale, scale, size=(n, c, h, w))).astype(np.float32)
