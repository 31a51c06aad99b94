import pytest

from infbend.bending import synthesize
from infbend.examples import build_example
from infbend.hypersurface import classify


@pytest.fixture(scope="session")
def clifford():
    return build_example("clifford")


@pytest.fixture(scope="session")
def clifford_cls(clifford):
    return classify(clifford.hyp)


@pytest.fixture(scope="session")
def clifford_bending(clifford, clifford_cls):
    return synthesize(clifford.hyp, clifford_cls)


@pytest.fixture(scope="session")
def ruled():
    return build_example("ruled-demo")


@pytest.fixture(scope="session")
def ruled_cls(ruled):
    return classify(ruled.hyp)


@pytest.fixture(scope="session")
def elliptic():
    return build_example("elliptic-demo")


@pytest.fixture(scope="session")
def sphere():
    return build_example("sphere-patch")


@pytest.fixture(scope="session")
def cone():
    return build_example("cone")
