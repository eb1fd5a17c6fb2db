import numpy as np
import pytest

from hyperflow.structures import Orientation, standard_triple


def random_rotation(rng: np.random.Generator, dim: int = 4) -> np.ndarray:
    """Haar-distributed element of SO(dim)."""
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def unit_vector(rng: np.random.Generator, dim: int = 4) -> np.ndarray:
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def positive():
    return standard_triple(Orientation.POSITIVE)


@pytest.fixture
def negative():
    return standard_triple(Orientation.NEGATIVE)


@pytest.fixture
def Y(positive):
    return positive.matrices


@pytest.fixture
def Yhat(negative):
    return negative.matrices
