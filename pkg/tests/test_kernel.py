import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coagprofile.errors import DomainError, KernelSpecError, WeightOverflowError
from coagprofile.kernel import (
    KernelSpec,
    G_eval,
    check_gdec,
    compute_h_lambda,
    h_lambda_inverse_closed_form,
    h_lambda_inverse_quadrature,
    kernel_eval,
    product_kernel,
    validate_kernel,
)

exponents = st.floats(0.01, 0.49)
pos = st.floats(1e-3, 1e3)


def admissible(a, b):
    a, b = sorted((a, b))
    return product_kernel(a, b)


# -------------------------------------------------------------- construction

@pytest.mark.parametrize("a,b", [(0.0, 0.25), (0.3, 0.2), (0.25, 0.5), (-0.1, 0.2)])
def test_rejects_inadmissible_exponents(a, b):
    with pytest.raises(KernelSpecError):
        product_kernel(a, b)


def test_lambda_is_derived():
    k = product_kernel(0.2, 0.4)
    assert k.lam == pytest.approx(0.3, abs=1e-16)


def test_config_round_trip():
    k = product_kernel(0.15, 0.35, K0=1.5)
    assert KernelSpec.from_config(k.to_config()) == k


# -------------------------------------------------------------- evaluation

def test_kernel_values_from_examples():
    k = product_kernel(0.25, 0.25)
    assert kernel_eval(k, 1.0, 1.0) == 2.0
    assert kernel_eval(k, 2.0, 2.0) == pytest.approx(2.0**1.5, rel=1e-15)
    k2 = product_kernel(0.2, 0.4)
    ref = float(mpmath.mpf(4) ** mpmath.mpf("0.2") + mpmath.mpf(4) ** mpmath.mpf("0.4"))
    assert kernel_eval(k2, 4.0, 1.0) == pytest.approx(ref, rel=1e-15)
    assert ref == pytest.approx(3.060609, abs=1e-6)


@pytest.mark.parametrize("x,y", [(0.0, 1.0), (1.0, -2.0)])
def test_kernel_domain(x, y):
    with pytest.raises(DomainError):
        kernel_eval(product_kernel(0.25, 0.25), x, y)


@given(exponents, exponents, pos, pos)
def test_symmetry_is_exact(a, b, x, y):
    k = admissible(a, b)
    assert kernel_eval(k, x, y) == kernel_eval(k, y, x)


@given(exponents, exponents, pos, pos, st.floats(1e-2, 1e2))
def test_homogeneity(a, b, x, y, s):
    k = admissible(a, b)
    lhs = kernel_eval(k, s * x, s * y)
    rhs = s ** (2 * k.lam) * kernel_eval(k, x, y)
    assert abs(lhs - rhs) <= 1e-12 * rhs


# -------------------------------------------------------------- validation

def test_validation_example_passes_with_unit_minimum():
    out = validate_kernel(product_kernel(0.25, 0.25, k0=1.0))
    assert out.passed
    assert out.observed_min == pytest.approx(1.0, abs=1e-15)


def test_validation_reports_violation_with_witness():
    out = validate_kernel(product_kernel(0.25, 0.25, K0=0.5))
    assert not out.growth_bound
    assert out.violations and out.violations[0].witness


def test_validation_lower_bound_failure():
    out = validate_kernel(product_kernel(0.25, 0.25, k0=1.5))
    assert not out.nondegeneracy and not out.passed


def test_custom_kernel_validation_checks_declared_lambda():
    good = KernelSpec(alpha=0.25, beta=0.25, kind="custom",
                      evaluator=lambda x, y: 2.0 * (x * y) ** 0.25)
    assert validate_kernel(good).homogeneity
    wrong = KernelSpec(alpha=0.2, beta=0.2, kind="custom",
                       evaluator=lambda x, y: 2.0 * (x * y) ** 0.25)
    assert not validate_kernel(wrong).homogeneity


# -------------------------------------------------------------- h_lambda

def _mp_h_inverse(a, b):
    # independent oracle: the defining double integral in 20-digit arithmetic;
    # t = (1 - s) u^(-1/a) maps the inner range to (0, 1] with a regular integrand
    with mpmath.workdps(20):
        a, b = mpmath.mpf(a), mpmath.mpf(b)
        lam2 = a + b
        k = 1 / a

        def inner(s):
            c = 1 - s

            def f(u):
                t = c * u ** (-k)
                return (s**a * t**b + s**b * t**a) * t ** (-(1 + lam2)) * c * k * u ** (-k - 1)

            return mpmath.quad(f, [0, 1])

        return float(mpmath.quad(lambda s: s ** (-lam2) * inner(s), [0, 0.5, 1]))


def test_h_lambda_reference_value():
    hl = compute_h_lambda(product_kernel(0.25, 0.25))
    ref = float(8 * mpmath.gamma(0.75) ** 2 / mpmath.gamma(1.5))
    assert 1.0 / hl.value == pytest.approx(ref, rel=1e-13)
    assert hl.value == pytest.approx(0.07377128743850606, rel=1e-13)


def test_h_lambda_asymmetric_example():
    inv = h_lambda_inverse_closed_form(product_kernel(0.2, 0.4))
    ref = float(7.5 * mpmath.gamma(0.8) * mpmath.gamma(0.6) / mpmath.gamma(1.4))
    assert inv == pytest.approx(ref, rel=1e-13)
    assert 1 / inv == pytest.approx(0.06824, abs=1e-5)


@pytest.mark.parametrize("a,b", [(0.25, 0.25), (0.1, 0.3), (0.05, 0.45), (0.2, 0.4)])
def test_h_lambda_against_double_integral_oracle(a, b):
    k = product_kernel(a, b)
    ref = _mp_h_inverse(a, b)
    assert h_lambda_inverse_closed_form(k) == pytest.approx(ref, rel=1e-12)
    q, _ = h_lambda_inverse_quadrature(k)
    assert q == pytest.approx(ref, rel=1e-9)


def test_h_lambda_methods_label():
    k = product_kernel(0.2, 0.3)
    assert compute_h_lambda(k, "closed_form").method == "closed_form"
    assert compute_h_lambda(k, "quadrature").method == "quadrature"


def test_custom_kernel_uses_quadrature():
    k = KernelSpec(alpha=0.25, beta=0.25, kind="custom",
                   evaluator=lambda x, y: x**0.25 * y**0.25 + x**0.25 * y**0.25)
    hl = compute_h_lambda(k)
    assert hl.method == "quadrature"
    assert hl.value == pytest.approx(0.07377128743850606, rel=1e-8)


# -------------------------------------------------------------- weight G

def test_G_example(k25, hl25):
    assert G_eval(k25, hl25, 0.0, 0.0) == pytest.approx(2 * hl25.value, rel=1e-15)
    assert 2 * hl25.value == pytest.approx(0.147542, abs=1e-6)


def test_G_overflow_is_reported(k25, hl25):
    with pytest.raises(WeightOverflowError):
        G_eval(k25, hl25, 2000.0, 0.0)


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
def test_gdec_identity(Y, Z, eps):
    k = product_kernel(0.25, 0.25)
    assert check_gdec(k, 0.07377128743850606, Y, Z, eps) <= 1e-12


def test_gdec_examples(k25, hl25):
    assert check_gdec(k25, hl25, 0.0, 0.0, 0.0) == 0.0
    assert check_gdec(k25, hl25, 0.3, -0.7, 1.2) <= 1e-12
    ratio = G_eval(k25, hl25, -1.0, -1.0) / G_eval(k25, hl25, 0.0, 0.0)
    assert ratio == pytest.approx(math.exp(-0.5), rel=1e-14)
