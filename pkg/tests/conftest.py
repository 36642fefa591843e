import math

import numpy as np
import pytest

from spinpair.geometry import UnitVec


@pytest.fixture
def coplanar():
    """Unit vector in the x-y plane at the given angle in degrees."""

    def make(deg: float) -> UnitVec:
        rad = math.radians(deg)
        return UnitVec(math.cos(rad), math.sin(rad), 0.0)

    return make


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation matrix (quaternion construction)."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )
