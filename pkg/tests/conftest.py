import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from coagprofile.kernel import compute_h_lambda, product_kernel
from coagprofile.profile import ConstantTail, LogGrid, make_profile

settings.register_profile(
    "repo",
    deadline=None,
    max_examples=40,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")


@pytest.fixture(scope="session")
def k25():
    return product_kernel(0.25, 0.25)


@pytest.fixture(scope="session")
def hl25(k25):
    return compute_h_lambda(k25)


@pytest.fixture(scope="session")
def k_asym():
    return product_kernel(0.2, 0.4)


@pytest.fixture
def default_grid():
    return LogGrid(-18.0, 7.0, 512)


def constant_profile(grid, kernel, hl, c=1.0):
    return make_profile(grid, np.full(grid.n, c), kernel, hl, ConstantTail(c), ConstantTail(c))
