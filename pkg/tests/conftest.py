import math

import numpy as np
import pytest


def circ_diff(a, b):
    """Smallest absolute angular difference, elementwise."""
    return np.abs((np.asarray(a) - np.asarray(b) + math.pi) % (2 * math.pi) - math.pi)


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
