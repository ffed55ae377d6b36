import numpy as np
import pytest

from sfegacn.data import LabeledSet


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def two_blobs():
    """Target rows around (0, 0) and side rows around (3, 3)."""
    rng = np.random.default_rng(0)
    T = rng.standard_normal((200, 2))
    S = rng.standard_normal((200, 2)) + 3.0
    return LabeledSet(np.vstack([T, S]), ["A"] * 200 + ["B"] * 200)
