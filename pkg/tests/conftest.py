import pytest

from opdisc.spectral import BasisSpec, Space


@pytest.fixture(scope="session")
def space16():
    return Space(BasisSpec(ambient_dim=16))


@pytest.fixture(scope="session")
def space64():
    return Space(BasisSpec(ambient_dim=64))
