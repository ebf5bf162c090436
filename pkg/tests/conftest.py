import numpy as np
import pytest

from emslice.env import EnvConfig, IntentRanges, SliceCatalog, SlicingEnv


@pytest.fixture
def ranges():
    return IntentRanges()


@pytest.fixture
def catalog():
    return SliceCatalog.default()


@pytest.fixture
def env(catalog):
    return SlicingEnv(EnvConfig(), catalog, seed=123)


@pytest.fixture
def rng():
    return np.random.default_rng(4242)
