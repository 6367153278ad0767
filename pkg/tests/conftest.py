import numpy as np
import pytest
from hypothesis import HealthCheck, settings

# every property runs on at least 100 generated instances, reproducibly
settings.register_profile(
    "lattice",
    max_examples=120,
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("lattice")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
