import numpy as np
import pytest

from rlvrlab.policy import FeatureSet
from rlvrlab.rng import SCENARIO_STREAM, stream_rng
from rlvrlab.scenarios import orthogonal_blocks, random_features


@pytest.fixture
def identity_pair() -> FeatureSet:
    """K=2 instance with rows (1,0) and (0,1), correct output first.

    The success probability is the logistic of theta_0 - theta_1, which makes
    every derivative checkable by hand.
    """
    return FeatureSet(features=(np.eye(2),), correct=[0])


@pytest.fixture
def theta_ln3() -> np.ndarray:
    return np.array([np.log(3.0), 0.0])


@pytest.fixture
def ortho_instance() -> FeatureSet:
    return orthogonal_blocks(n=4, K=3, block_dim=3, scale=1.0, rng=stream_rng(42, SCENARIO_STREAM))


def make_random_instance(rng, n_max=4, k_max=8, d_max=32, normalize=True):
    """Random instance plus a theta with entries in [-3, 3]."""
    n = int(rng.integers(1, n_max + 1))
    K = int(rng.integers(2, k_max + 1))
    d = int(rng.integers(2, d_max + 1))
    fs = random_features(n, K, d, overlap=float(rng.uniform(0.0, 1.0)), rng=rng)
    if normalize:
        fs = FeatureSet(
            features=tuple(X / max(1.0, np.linalg.norm(X, 2)) for X in fs.features),
            correct=fs.correct,
        )
    theta = rng.uniform(-3.0, 3.0, size=d)
    return fs, theta
