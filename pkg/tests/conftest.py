import numpy as np
import pytest

from physmap.model import Constant, Deterministic, ModelSpec


@pytest.fixture
def unit_spec():
    """kappa = 1, alpha = 1, L = 1: the reference homogeneous model."""
    return ModelSpec(Constant(1.0), Constant(1.0), Deterministic(1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
