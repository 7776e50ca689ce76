import math

import numpy as np
import pytest

from spinwave.retrieval import DecayCurve
from spinwave.scenario import parse_scenario

TWO_DEG = math.radians(2.0)


def curve_of(t, y, err=None):
    t = np.asarray(t, dtype=float)
    return DecayCurve(t, y, np.zeros_like(t) if err is None else err)


def scenario(**blocks):
    return parse_scenario(blocks)


def noisy(rng, y, level=0.02):
    """Multiplicative gaussian noise."""
    return y * (1.0 + level * rng.standard_normal(len(y)))


@pytest.fixture
def default_cell_scenario():
    return scenario()
