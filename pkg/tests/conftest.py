import os

import numpy as np
import pytest

from src.hardy_core import StripDomain
from src.named_operators import mathieu, minus_d2

DATA_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "data")


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture
def unit_strip():
    return StripDomain(1.0)


@pytest.fixture
def laplacian(unit_strip):
    return minus_d2(unit_strip)


@pytest.fixture
def mathieu_half():
    """-D^2 + 2 cos 2z + 1 on |Im z| < 0.5."""
    return mathieu(StripDomain(0.5))


@pytest.fixture
def data_path():
    return lambda name: os.path.join(DATA_DIR, name)
