from __future__ import annotations

import pytest
from hypothesis import HealthCheck, settings

from diffbound.catalog import get_builtin
from diffbound.model import TransformedDiffusion

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def ou():
    return TransformedDiffusion.from_drift("-y")


@pytest.fixture(scope="session")
def zero_drift():
    return TransformedDiffusion.from_drift("0")


@pytest.fixture(scope="session")
def trunc_ou():
    return get_builtin("trunc-ou(c=1)").transformed()


@pytest.fixture(scope="session")
def feller():
    return get_builtin("feller").transformed()
