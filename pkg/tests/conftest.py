import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from covlab.grid import GridFunction, GridSpec

settings.register_profile(
    "covlab",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("covlab")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def spec64():
    return GridSpec(8.0, 64)


def smooth(spec, rng, complex_=True):
    """Random decaying smooth function sampled on the grid."""
    x = spec.nodes
    c = rng.normal(size=3) + (1j * rng.normal(size=3) if complex_ else 0)
    return GridFunction(
        spec,
        c[0] * np.exp(-rng.uniform(1, 3) * x)
        + c[1] * np.exp(-((x - rng.uniform(0, 4)) ** 2))
        + c[2] * x * np.exp(-x),
    )
