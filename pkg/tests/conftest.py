import json
from importlib import resources

import numpy as np
import pytest

from fockrage.onebody import OneBodyOperator, TwoBodyOperator, swap_permutation


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def thresholds():
    text = resources.files("fockrage").joinpath("data/thresholds.json").read_text()
    return json.loads(text)


def random_hermitian(D, rng, scale=1.0):
    A = rng.normal(size=(D, D)) + 1j * rng.normal(size=(D, D))
    return scale * (A + A.conj().T) / 2


def random_one_body(d, rng):
    return OneBodyOperator(random_hermitian(d, rng))


def random_two_body(d, rng):
    """Hermitian, exchange-symmetric and generally non-diagonal."""
    W = random_hermitian(d * d, rng)
    p = swap_permutation(d)
    W = 0.5 * (W + W[np.ix_(p, p)])
    return TwoBodyOperator(W, d)


def random_state_vector(D, rng):
    v = rng.normal(size=D) + 1j * rng.normal(size=D)
    return v / np.linalg.norm(v)
