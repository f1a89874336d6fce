import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from holodyn.measures import sample_equilibrium
from holodyn.projspace import lattes4_suspension, normalize, power_map

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

START = (0.3 + 0.1j, 0.7 - 0.2j, 1.0)


@pytest.fixture(scope="session")
def lattes():
    return lattes4_suspension()


@pytest.fixture(scope="session")
def power2():
    return power_map(2)


@pytest.fixture(scope="session")
def power4():
    return power_map(4)


@pytest.fixture(scope="session")
def lattes_cloud(lattes):
    return sample_equilibrium(lattes, normalize(START), 25, 4000, 3)


@pytest.fixture(scope="session")
def power_cloud(power2):
    return sample_equilibrium(power2, normalize([1, 1, 1]), 20, 4000, 3)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
