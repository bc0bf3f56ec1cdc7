import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coagprofile.errors import DomainError
from coagprofile.kernel import compute_h_lambda, product_kernel
from coagprofile.profile import LogGrid, ZeroTail, evaluate_profile, make_profile, translate_profile
from coagprofile.verify import (
    VerifyConfig,
    bounds_report,
    certify_bounds,
    default_small_x_window,
    dyadic_average,
    dyadic_average_sup,
    flux_residual,
    growth_rate_check,
    growth_zero_nodes,
    linearized_oscillation_exponent,
    oscillation_diagnostic,
    verify_profile,
)

from conftest import constant_profile

K25 = product_kernel(0.25, 0.25)
HL25 = compute_h_lambda(K25)


def _prof(grid, H):
    return make_profile(grid, H, K25, HL25)


# -------------------------------------------------------------- bounds

def test_bounds_of_constant(default_grid):
    p = constant_profile(default_grid, K25, HL25, 1.5)
    assert bounds_report(p) == (1.5, 1.5)
    assert certify_bounds(1.5, 1.5)
    assert not certify_bounds(math.inf, 1.0)
    assert not certify_bounds(1.0, 0.0)


def test_bounds_window_outside_interior_rejected(default_grid):
    p = constant_profile(default_grid, K25, HL25)
    with pytest.raises(DomainError):
        bounds_report(p, small_x_window=(-18.0, -10.0))


def test_default_small_window_spans_two_decades(default_grid):
    p = constant_profile(default_grid, K25, HL25)
    lo, hi = default_small_x_window(p)
    assert lo == pytest.approx(-16.0)
    assert hi - lo == pytest.approx(2 * math.log(10.0))


# -------------------------------------------------------------- dyadic averages

@given(st.floats(0.0, 10.0))
def test_dyadic_average_of_constant(c):
    p = constant_profile(LogGrid(-18.0, 7.0, 512), K25, HL25, c)
    assert dyadic_average(p, -3.1) == pytest.approx(c, rel=1e-14, abs=1e-300)
    assert dyadic_average_sup(p, 6) == pytest.approx(c, rel=1e-14, abs=1e-300)


def _sawtooth(grid):
    return 1.0 + 0.5 * np.abs(((grid.nodes / 0.9) % 2.0) - 1.0)


def test_dyadic_average_against_dense_quadrature(default_grid):
    p = _prof(default_grid, _sawtooth(default_grid))
    for XR in (-10.0, -4.37, 0.0):
        R = math.exp(XR)
        x = np.linspace(R / 2, R, 200_001)
        brute = np.trapezoid(evaluate_profile(p, np.log(x)), x) / (R / 2)
        assert dyadic_average(p, XR) == pytest.approx(brute, rel=1e-8)


def test_dyadic_average_of_linear_in_x(default_grid):
    # h = x: the mean over [R/2, R] is 3R/4, up to interpolation error
    p = _prof(default_grid, np.exp(default_grid.nodes))
    assert dyadic_average(p, -1.0) == pytest.approx(0.75 * math.exp(-1.0), rel=1e-3)


def test_dyadic_range_too_long(default_grid):
    p = constant_profile(default_grid, K25, HL25)
    with pytest.raises(DomainError):
        dyadic_average_sup(p, 7)


# -------------------------------------------------------------- growth bound

def _growth_brute(p, margin=2.0):
    X = p.grid.nodes
    H = p.values
    keep = [i for i in range(len(X)) if p.grid.interior_mask(margin)[i] and H[i] > 0.0]
    best = 0.0
    for a in range(len(keep)):
        for b in range(a + 1, len(keep)):
            i, j = keep[a], keep[b]
            best = max(best, math.log(H[j] / (2.0 * H[i])) / (X[j] - X[i]))
    return best


@given(st.integers(0, 10_000))
def test_growth_equals_exhaustive_oracle(seed):
    rng = np.random.default_rng(seed)
    grid = LogGrid(-6.0, 6.0, 64)
    H = rng.uniform(0.0, 3.0, 64) * np.exp(rng.uniform(0.0, 2.0) * grid.nodes)
    H[rng.random(64) < 0.1] = 0.0
    p = _prof(grid, H)
    assert growth_rate_check(p) == _growth_brute(p)


def test_growth_of_exponential_closed_form():
    grid = LogGrid(-16.0, 5.0, 512)
    p = _prof(grid, np.exp(grid.nodes))
    inner = grid.nodes[grid.interior_mask(2.0)]
    L = inner[-1] - inner[0]
    assert growth_rate_check(p) == pytest.approx(1.0 - math.log(2.0) / L, rel=1e-9)


def test_growth_of_constant_is_zero(default_grid):
    assert growth_rate_check(constant_profile(default_grid, K25, HL25)) == 0.0


@given(st.integers(0, 10_000), st.floats(0.01, 100.0), st.floats(-3.0, 3.0))
def test_growth_scale_and_translation_invariant(seed, c, shift):
    rng = np.random.default_rng(seed)
    grid = LogGrid(-8.0, 8.0, 80)
    p = _prof(grid, rng.uniform(0.1, 2.0, 80))
    D = growth_rate_check(p)
    assert growth_rate_check(p.scaled(c)) == pytest.approx(D, rel=1e-9, abs=1e-12)
    assert growth_rate_check(translate_profile(p, shift)) == pytest.approx(D, rel=1e-9, abs=1e-12)


def test_growth_zero_nodes_counted(default_grid):
    H = np.ones(default_grid.n)
    H[200:210] = 0.0
    p = _prof(default_grid, H)
    assert growth_zero_nodes(p) == 10
    assert growth_rate_check(p) == 0.0
    z = _prof(default_grid, np.zeros(default_grid.n))
    assert growth_rate_check(z) == math.inf


# -------------------------------------------------------------- flux residual

def test_flux_residual_constant(default_grid):
    assert flux_residual(constant_profile(default_grid, K25, HL25)) <= 1e-4


def test_flux_residual_zero_is_nan(default_grid):
    z = make_profile(default_grid, np.zeros(default_grid.n), K25, HL25, ZeroTail(), ZeroTail())
    assert math.isnan(flux_residual(z))


# -------------------------------------------------------------- oscillation

def test_oscillation_period_recovered(default_grid):
    X = default_grid.nodes
    p = _prof(default_grid, 1.0 + 0.1 * np.sin(2 * math.pi * X / 1.7))
    osc = oscillation_diagnostic(p, window=(-16.0, -3.0))
    assert osc.flag is None
    assert osc.period == pytest.approx(1.7, abs=0.1)


def test_oscillation_absent_for_constant(default_grid):
    osc = oscillation_diagnostic(constant_profile(default_grid, K25, HL25), window=(-16.0, -3.0))
    assert osc.period is None


def test_oscillation_short_window_flagged(default_grid):
    X = default_grid.nodes
    p = _prof(default_grid, 1.0 + 0.1 * np.sin(2 * math.pi * X / 6.0))
    osc = oscillation_diagnostic(p, window=(-16.0, -6.0))
    assert osc.period is None and osc.flag == "window_shorter_than_4_periods"


def _mp_dispersion_root(alpha, beta):
    # same relation, written with mpmath Beta functions and its own root finder
    lam = 0.5 * (alpha + beta)
    k = product_kernel(alpha, beta)
    hl = compute_h_lambda(k).value
    terms = [(alpha, beta), (beta, alpha)]

    def m(mu):
        s = 0
        for p, q in terms:
            a = 1 - 2 * lam + p
            c = q - 2 * lam
            s += mpmath.beta(a + mu, 1 + c) / (-c) + mpmath.beta(a, 1 + c + mu) / (-(c + mu))
        return hl * s - 1

    with mpmath.workdps(30):
        return complex(mpmath.findroot(m, mpmath.mpc(0.1, 0.5)))


@pytest.mark.parametrize("lam,expected", [(0.15, 0.0696 + 0.3696j),
                                          (0.25, 0.10921 + 0.46136j),
                                          (0.35, 0.14189 + 0.52629j)])
def test_dispersion_root(lam, expected):
    k = product_kernel(lam, lam)
    mu = linearized_oscillation_exponent(k, compute_h_lambda(k))
    assert mu == pytest.approx(_mp_dispersion_root(lam, lam), abs=1e-10)
    assert mu == pytest.approx(expected, abs=1e-4)


def test_dispersion_root_asymmetric():
    k = product_kernel(0.1, 0.3)
    mu = linearized_oscillation_exponent(k, compute_h_lambda(k))
    assert mu == pytest.approx(_mp_dispersion_root(0.1, 0.3), abs=1e-10)
    assert mu.real > 0 and mu.imag > 0


# -------------------------------------------------------------- combined report

def test_verify_config_validation():
    for kw in ({"margin": -1.0}, {"small_x_decades": 0.0}, {"r_decades": 0.5}):
        with pytest.raises(DomainError):
            VerifyConfig(**kw)


def test_verify_constant_profile(default_grid):
    rep = verify_profile(constant_profile(default_grid, K25, HL25))
    assert rep.certified
    assert rep.sup_h == 1.0 and rep.inf_h_small_x == 1.0
    assert rep.dyadic_avg_sup == pytest.approx(1.0, rel=1e-14)
    assert rep.min_growth_D == 0.0
    assert rep.flux_residual_sup <= 1e-4
    assert rep.osc_period is None
    d = rep.to_dict()
    assert set(d["windows"]) == {"small_x", "dyadic_R", "oscillation"}
    assert "certified" in rep.summary()


def test_verify_clips_dyadic_range_after_gauge_shift(default_grid):
    p = translate_profile(constant_profile(default_grid, K25, HL25), -5.0)
    rep = verify_profile(p)
    assert "dyadic_range_clipped" in rep.flags
    assert rep.certified
