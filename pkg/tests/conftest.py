import numpy as np
import pytest

from sospin.lattice import Box, HeightField, ModelParams
from sospin.oracle import theta1_estimate


@pytest.fixture(scope="session")
def theta1_35():
    """Spike constant at beta=3.5, measured once from the exact oracle."""
    rep = theta1_estimate(ModelParams(beta=3.5), [3, 5, 7], [1, 2, 3, 4])
    return rep.theta1


def random_field(rng, side=6, lo=-3, hi=3, bc=0, origin=(1, 1)):
    box = Box(side, side, origin=origin)
    return HeightField(box, rng.integers(lo, hi + 1, size=(side, side)), bc)
