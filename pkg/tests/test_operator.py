import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coagprofile.errors import DomainError, KernelSpecError
from coagprofile.kernel import HLambda, KernelSpec, compute_h_lambda, product_kernel
from coagprofile.operator import QuadratureConfig, apply_T, apply_T_values, flux, flux_values
from coagprofile.profile import (
    ConstantTail,
    LogGrid,
    ZeroTail,
    make_profile,
    translate_profile,
)

from conftest import constant_profile

K25 = product_kernel(0.25, 0.25)
HL25 = compute_h_lambda(K25)


def _random_profile(seed, n=96, kernel=K25):
    rng = np.random.default_rng(seed)
    grid = LogGrid(-8.0, 4.0, n)
    vals = rng.uniform(0.2, 2.0, n) * np.exp(-np.exp(grid.nodes - 2.0))
    return make_profile(grid, vals, kernel, compute_h_lambda(kernel))


# -------------------------------------------------------------- constant solution

@pytest.mark.parametrize("a,b", [(0.25, 0.25), (0.2, 0.4), (0.1, 0.3)])
def test_constant_solution(a, b, default_grid):
    k = product_kernel(a, b)
    p = constant_profile(default_grid, k, compute_h_lambda(k))
    assert np.max(np.abs(apply_T_values(p) - 1.0)) <= 1e-4


def test_constant_two_maps_to_four(default_grid):
    p = constant_profile(default_grid, K25, HL25, 2.0)
    assert np.max(np.abs(apply_T_values(p) - 4.0)) <= 4e-4


def test_zero_maps_to_zero(default_grid):
    p = make_profile(default_grid, np.zeros(default_grid.n), K25, HL25, ZeroTail(), ZeroTail())
    assert not apply_T_values(p).any()


# -------------------------------------------------------------- algebraic structure

@given(st.integers(0, 10_000), st.floats(0.1, 10.0))
def test_quadratic_scaling(seed, c):
    p = _random_profile(seed)
    T1 = apply_T_values(p)
    Tc = apply_T_values(p.scaled(c))
    np.testing.assert_allclose(Tc, c * c * T1, rtol=1e-12, atol=0)


@given(st.integers(0, 10_000), st.floats(-5.0, 5.0))
def test_translation_equivariance(seed, shift):
    p = _random_profile(seed)
    a = apply_T(translate_profile(p, shift)).values
    b = translate_profile(apply_T(p), shift).values
    assert np.max(np.abs(a - b)) <= 1e-12


def test_output_is_nonnegative():
    p = _random_profile(7)
    assert apply_T_values(p).min() >= 0.0


def test_threads_are_bit_identical():
    p = _random_profile(3, n=300)
    np.testing.assert_array_equal(apply_T_values(p, threads=1), apply_T_values(p, threads=4))


def test_panel_refinement_is_consistent():
    p = _random_profile(5)
    a = apply_T_values(p, QuadratureConfig(panels_per_cell=1))
    b = apply_T_values(p, QuadratureConfig(panels_per_cell=3))
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-12)


# -------------------------------------------------------------- convergence to the continuum

def _continuum_T(a, b, hl, x):
    # T h(x) for h(x) = e^-x: the inner z-integral is an upper incomplete gamma
    with mpmath.workdps(20):
        a, b, x = mpmath.mpf(a), mpmath.mpf(b), mpmath.mpf(x)
        lam2 = a + b

        def inner(y):
            w = x - y
            return y**a * mpmath.gammainc(b - lam2, w) + y**b * mpmath.gammainc(a - lam2, w)

        v = mpmath.quad(lambda y: y ** (-lam2) * mpmath.exp(-y) * inner(y), [0, x / 2, x])
        return float(hl * x ** (lam2 - 1) * v)


@pytest.mark.parametrize("a,b", [(0.25, 0.25), (0.1, 0.3)])
def test_second_order_convergence_on_smooth_profile(a, b):
    k = product_kernel(a, b)
    hl = compute_h_lambda(k)
    Xs = np.array([-4.0, -1.0, 0.0])
    ref = np.array([_continuum_T(a, b, hl.value, math.exp(X)) for X in Xs])
    errs = []
    for n in (351, 701):
        g = LogGrid(-30.0, 5.0, n)
        p = make_profile(g, np.exp(-np.exp(g.nodes)), k, hl, ConstantTail(1.0), ZeroTail())
        idx = np.rint((Xs - g.x_min_log) / g.dx).astype(int)
        assert np.allclose(g.nodes[idx], Xs, atol=1e-12)
        errs.append(np.max(np.abs(apply_T_values(p)[idx] - ref) / ref))
    assert errs[1] <= 1e-4
    assert errs[0] / errs[1] >= 3.5


# -------------------------------------------------------------- flux

def test_flux_of_constant_solution(default_grid):
    p = constant_profile(default_grid, K25, HL25)
    for X in default_grid.nodes[150:400:50]:
        x = math.exp(X)
        assert flux(p, x) == pytest.approx(x**0.5, rel=1e-4)


def test_flux_bilinearity_and_zero(default_grid):
    p = _random_profile(11)
    np.testing.assert_allclose(flux_values(p.scaled(2.0)), 4.0 * flux_values(p), rtol=1e-12)
    z = make_profile(default_grid, np.zeros(default_grid.n), K25, HL25, ZeroTail(), ZeroTail())
    assert flux(z, 1.0 if np.any(np.isclose(default_grid.nodes, 0.0)) else
                math.exp(default_grid.nodes[300])) == 0.0


def test_flux_domain_errors(default_grid):
    p = constant_profile(default_grid, K25, HL25)
    with pytest.raises(DomainError):
        flux(p, math.exp(default_grid.nodes[1]))
    with pytest.raises(DomainError):
        flux(p, math.exp(default_grid.nodes[300] + 0.3 * default_grid.dx))
    with pytest.raises(DomainError):
        flux(p, -1.0)


# -------------------------------------------------------------- configuration and flags

def test_custom_kernel_rejected():
    k = KernelSpec(alpha=0.25, beta=0.25, kind="custom", evaluator=lambda x, y: 2 * (x * y) ** 0.25)
    g = LogGrid(-5.0, 5.0, 32)
    p = make_profile(g, np.ones(32), k, HLambda(0.07, "quadrature", 0.0))
    with pytest.raises(KernelSpecError):
        apply_T_values(p)


def test_zero_left_tail_is_flagged(default_grid):
    p = make_profile(default_grid, np.ones(default_grid.n), K25, HL25, ZeroTail(), ConstantTail(1.0))
    assert "left_tail_truncation" in apply_T(p).flags
    assert apply_T(constant_profile(default_grid, K25, HL25)).flags == ()


@pytest.mark.parametrize("kw", [{"panels_per_cell": 0}, {"tail_cutoff_tol": 1e-3},
                                {"tail_cutoff_tol": 0.0}, {"interior_margin": -1.0}])
def test_quadrature_config_validation(kw):
    with pytest.raises(DomainError):
        QuadratureConfig(**kw)
