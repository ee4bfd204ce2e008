import numpy as np
import pytest

from scenesmith.backends import mock_backend_set


@pytest.fixture
def backends():
    return mock_backend_set()


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
