import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tomobench.loss import make_loss
from tomobench.tester import Tester, six_state_povm

# the POVM container is not a test class despite its name
Tester.__test__ = False


@pytest.fixture(scope="session")
def six_state():
    return six_state_povm()


@pytest.fixture
def hs_loss():
    return make_loss("hs", 2)


def random_interior_vectors(seed: int, count: int, max_radius: float = 0.95) -> np.ndarray:
    """Uniform-ish qubit Bloch vectors strictly inside the ball."""
    rng = np.random.default_rng(seed)
    u = rng.normal(size=(count, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    r = max_radius * rng.uniform(size=count) ** (1.0 / 3.0)
    return u * r[:, None]
