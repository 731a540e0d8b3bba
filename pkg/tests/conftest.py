import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hkfloer.domain import build_sphere_domain, build_torus_domain
from hkfloer.field import Target

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def sphere1():
    return build_sphere_domain(1)


@pytest.fixture(scope="session")
def sphere2():
    return build_sphere_domain(2)


@pytest.fixture(scope="session")
def sphere3():
    return build_sphere_domain(3)


@pytest.fixture(scope="session")
def torus6():
    return build_torus_domain(N=6, degree=2)


@pytest.fixture(scope="session")
def torus8():
    return build_torus_domain(N=8, degree=3)


@pytest.fixture(scope="session")
def h1():
    return Target(1)


@pytest.fixture(scope="session")
def t4():
    return Target(1, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
