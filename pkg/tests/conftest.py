import numpy as np
import pytest

from bundlecurv.fields import DEFAULT_ENGINE
from bundlecurv.scenarios import build_scenario


def assert_close(actual, expected, tol, what=""):
    """Relative max-norm gap |a - b| / max(1, |a|, |b|) <= tol."""
    a = np.asarray(actual, dtype=float)
    b = np.asarray(expected, dtype=float)
    scale = max(1.0, float(np.max(np.abs(a), initial=0.0)),
                float(np.max(np.abs(b), initial=0.0)))
    gap = float(np.max(np.abs(a - b), initial=0.0)) / scale
    assert gap <= tol, "%s: relative gap %.3e exceeds %.0e" % (what, gap, tol)


@pytest.fixture(scope="session")
def engine():
    return DEFAULT_ENGINE


@pytest.fixture(scope="session")
def twisted():
    return build_scenario("twisted_bundle")


@pytest.fixture(scope="session")
def abelian():
    return build_scenario("abelian_limit")


@pytest.fixture(scope="session")
def scaled():
    return build_scenario("scaled_orbit")


@pytest.fixture(scope="session")
def flat():
    return build_scenario("flat_product")
