import numpy as np
import pytest

from htslb import build_config


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_config():
    """A cheap linear-regime system for engine and CLI smoke tests."""
    return build_config(dict(N=4, alpha=2.0, warmup=2000, post_warmup=20000, seed=7))
