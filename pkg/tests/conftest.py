import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_affinity(rng, n):
    """Random symmetric non-negative matrix with unit diagonal."""
    a = rng.random((n, n))
    w = (a + a.T) / 2.0
    np.fill_diagonal(w, 1.0)
    return w
