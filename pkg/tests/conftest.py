import numpy as np
import pytest

from cpchan.channel import SystemConfig


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def cfg6():
    # Default carrier setup with six training subcarriers; used by most of
    # the pipeline-level tests.
    return SystemConfig(k_train=6)


def complex_randn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
