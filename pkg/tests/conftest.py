import pytest

from tprl.geometry import build_cross_map, build_oval_map


@pytest.fixture(scope="session")
def oval_map():
    return build_oval_map()


@pytest.fixture(scope="session")
def cross_map():
    return build_cross_map()
