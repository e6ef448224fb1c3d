import numpy as np
import pytest

from pexlab.replay import Batch


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_batch(
    rng: np.random.Generator,
    n: int = 32,
    obs_dim: int = 3,
    act_dim: int = 2,
    done_fraction: float = 0.2,
) -> Batch:
    """Synthetic transition batch for loss-level tests."""
    return Batch(
        obs=rng.normal(size=(n, obs_dim)),
        actions=rng.uniform(-1.0, 1.0, size=(n, act_dim)),
        rewards=rng.normal(size=n),
        next_obs=rng.normal(size=(n, obs_dim)),
        dones=(rng.random(n) < done_fraction).astype(np.float64),
        truncated=np.zeros(n),
    )
