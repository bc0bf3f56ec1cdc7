import math

import mpmath
import numpy as np
import pytest

from coagprofile.special import beta, gamma


@pytest.mark.parametrize("x", np.linspace(0.01, 2.0, 200))
def test_gamma_matches_mpmath_on_unit_range(x):
    ref = float(mpmath.gamma(mpmath.mpf(float(x))))
    assert abs(gamma(float(x)) - ref) <= 1e-13 * abs(ref)


def test_gamma_known_values():
    assert gamma(1.0) == pytest.approx(1.0, rel=1e-15)
    assert gamma(0.5) == pytest.approx(math.sqrt(math.pi), rel=1e-14)
    assert gamma(1.5) == pytest.approx(0.5 * math.sqrt(math.pi), rel=1e-14)


@pytest.mark.parametrize("bad", [0.0, -1.0, math.inf, math.nan])
def test_gamma_rejects_bad_arguments(bad):
    with pytest.raises(ValueError):
        gamma(bad)


def test_beta_against_mpmath():
    for a, b in [(0.25, 0.75), (0.8, 0.6), (1.0, 1.0), (0.1, 1.9)]:
        ref = float(mpmath.beta(a, b))
        assert beta(a, b) == pytest.approx(ref, rel=1e-13)
