import numpy as np
import pytest

from ntaverify.geometry import GraphDomain


@pytest.fixture
def flat2():
    return GraphDomain.flat(2, truncation_radius=4.0)


@pytest.fixture
def sawtooth2():
    return GraphDomain.sawtooth(2, truncation_radius=2.0, lipschitz=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
