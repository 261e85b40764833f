import numpy as np
import pytest

from decohist.core import CoarseGraining, Endpoints, GaussianState, SystemParams


@pytest.fixture
def free_params():
    return SystemParams("free", 1.0, 5.0, 1.0, 0.0, 1.0, 1.0)


@pytest.fixture
def osc_params():
    return SystemParams("oscillator", 1.0, 5.0, 1.0, 1.0, 1.0, 1.0)


@pytest.fixture
def endpoints():
    return Endpoints(0.1, 0.7, 0.0, 0.45)


@pytest.fixture
def cg7():
    return CoarseGraining(1.0, 0.0, -3, 3)


@pytest.fixture
def packet():
    return GaussianState(center=0.0, width=0.5)


@pytest.fixture
def pointer():
    return GaussianState(center=0.0, width=0.3)


def rel(a, b):
    a, b = complex(a), complex(b)
    den = max(abs(a), abs(b))
    return abs(a - b) / den if den > 0.0 else 0.0


@pytest.fixture
def rel_diff():
    return rel
