import numpy as np
import pytest
from hypothesis import HealthCheck, settings

# JIT warmup can blow per-example deadlines; wall-clock limits are pointless
# for this suite anyway.
settings.register_profile(
    "mia",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("mia")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_grid(rng, max_m=64, max_n=32, min_group=0):
    """Random grid with per-column mask; min_group forces at least that many
    members and non-members per column."""
    m = int(rng.integers(max(2 * min_group, 2), max_m + 1))
    n = int(rng.integers(1, max_n + 1))
    scores = rng.standard_normal((m, n)) * np.exp(rng.uniform(-1.0, 1.0, n))
    mask = np.zeros((m, n), dtype=bool)
    for x in range(n):
        k = int(rng.integers(min_group, m - min_group + 1))
        mask[rng.permutation(m)[:k], x] = True
    return scores, mask
