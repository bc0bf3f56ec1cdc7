"""Coagulation kernels, their structural checks, h_lambda and the log weight G.

A kernel is described by :class:`KernelSpec`.  The product kernel
``K(x, y) = x**alpha * y**beta + x**beta * y**alpha`` is built in; any other
homogeneous symmetric kernel can be supplied as a ``custom`` evaluator, in
which case ``alpha`` and ``beta`` are the exponents of the declared growth
bound ``K <= K0 (x**alpha y**beta + x**beta y**alpha)`` and the homogeneity
degree is ``alpha + beta``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy import integrate

from .errors import DomainError, KernelSpecError, QuadratureError, WeightOverflowError
from .special import gamma

KernelFn = Callable[[np.ndarray, np.ndarray], np.ndarray]

# Non-degeneracy box [1/4, 1]^2; the lower edge is fixed, not configurable.
NONDEGENERACY_LOW = 0.25

_LOG_MAX = math.log(np.finfo(float).max)


@dataclass(frozen=True)
class KernelSpec:
    """Homogeneous symmetric kernel with its structural constants.

    ``lam`` (half the homogeneity degree) is derived from ``alpha + beta``.
    ``k0`` defaults to the exact minimum of the product kernel over the
    non-degeneracy box, ``2 * (1/4)**(2 lam)``.
    """

    alpha: float
    beta: float
    K0: float = 1.0
    k0: float | None = None
    kind: str = "product"
    evaluator: KernelFn | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        a, b = float(self.alpha), float(self.beta)
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)
        if self.kind not in ("product", "custom"):
            raise KernelSpecError(f"unknown kernel kind {self.kind!r}")
        if not (0.0 < a <= b < 0.5):
            raise KernelSpecError(
                f"kernel exponents must satisfy 0 < alpha <= beta < 1/2, got alpha={a}, beta={b}"
            )
        if not self.K0 > 0.0:
            raise KernelSpecError(f"K0 must be positive, got {self.K0}")
        if self.k0 is None:
            object.__setattr__(self, "k0", 2.0 * NONDEGENERACY_LOW ** (a + b))
        elif not self.k0 > 0.0:
            raise KernelSpecError(f"k0 must be positive, got {self.k0}")
        if self.kind == "custom" and self.evaluator is None:
            raise KernelSpecError("custom kernels need an evaluator")

    @property
    def lam(self) -> float:
        return 0.5 * (self.alpha + self.beta)

    @property
    def is_product(self) -> bool:
        return self.kind == "product"

    def power_terms(self) -> list[tuple[float, float, float]]:
        """``(coefficient, p, q)`` with ``K = sum coef * x**p * y**q``.

        Only available for product kernels; the operator relies on it.
        """
        if not self.is_product:
            raise KernelSpecError("power-law decomposition requires a product kernel")
        return [(1.0, self.alpha, self.beta), (1.0, self.beta, self.alpha)]

    def to_config(self) -> dict[str, str]:
        return {
            "kind": self.kind,
            "alpha": repr(self.alpha),
            "beta": repr(self.beta),
            "K0": repr(self.K0),
            "k0": repr(self.k0),
        }

    @classmethod
    def from_config(cls, section: Mapping[str, str]) -> "KernelSpec":
        kind = section.get("kind", "product").strip().lower()
        if kind != "product":
            raise KernelSpecError("only product kernels can be read from a config file")
        k0 = section.get("k0")
        return cls(
            alpha=float(section["alpha"]),
            beta=float(section["beta"]),
            K0=float(section.get("K0", section.get("k0_upper", 1.0))),
            k0=None if k0 in (None, "", "auto") else float(k0),
        )


def product_kernel(alpha: float, beta: float, **kw) -> KernelSpec:
    return KernelSpec(alpha=alpha, beta=beta, **kw)


def kernel_eval(spec: KernelSpec, x, y):
    """Evaluate ``K(x, y)``; scalars in, scalar out, arrays broadcast."""
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if np.any(xa <= 0.0) or np.any(ya <= 0.0):
        raise DomainError("kernel arguments must be positive")
    if spec.is_product:
        a, b = spec.alpha, spec.beta
        out = xa**a * ya**b + xa**b * ya**a
    else:
        out = np.asarray(spec.evaluator(xa, ya), dtype=float)
    if out.ndim == 0:
        return float(out)
    return out


# --------------------------------------------------------------------------
# structural assumptions


@dataclass(frozen=True)
class Violation:
    assumption: str
    inequality: str
    witness: tuple[float, ...]
    observed: float


@dataclass(frozen=True)
class ValidationOutcome:
    homogeneity: bool
    growth_bound: bool
    nondegeneracy: bool
    observed_min: float
    max_homogeneity_deviation: float
    violations: tuple[Violation, ...] = ()

    @property
    def passed(self) -> bool:
        return self.homogeneity and self.growth_bound and self.nondegeneracy


def validate_kernel(
    spec: KernelSpec,
    samples: int = 1000,
    seed: int = 0,
    grid_nodes: int = 64,
    rtol: float = 1e-12,
) -> ValidationOutcome:
    """Check homogeneity, the power-law growth bound and non-degeneracy.

    Sample points are log-uniform on ``[1e-3, 1e3]`` with a fixed seed.
    The non-degeneracy minimum is taken over a uniform ``grid_nodes``-square
    grid of ``[1/4, 1]^2``.
    """
    if samples < 16:
        raise DomainError("validate_kernel needs at least 16 samples")
    if grid_nodes < 64:
        raise DomainError("the non-degeneracy grid needs at least 64 nodes per side")
    rng = np.random.default_rng(seed)
    x = np.exp(rng.uniform(-3, 3, samples) * math.log(10))
    y = np.exp(rng.uniform(-3, 3, samples) * math.log(10))
    a = np.exp(rng.uniform(-3, 3, samples) * math.log(10))
    lam2 = 2.0 * spec.lam
    violations = []

    k_xy = kernel_eval(spec, x, y)
    scaled = a**lam2 * k_xy
    dev = np.abs(kernel_eval(spec, a * x, a * y) - scaled) / scaled
    hom_ok = bool(np.all(dev <= rtol))
    if not hom_ok:
        i = int(np.argmax(dev))
        violations.append(
            Violation("homogeneity", "|K(ax,ay) - a^(2 lam) K(x,y)| <= 1e-12 a^(2 lam) K(x,y)",
                      (float(a[i]), float(x[i]), float(y[i])), float(dev[i]))
        )

    bound = spec.K0 * (x**spec.alpha * y**spec.beta + x**spec.beta * y**spec.alpha)
    excess = (k_xy - bound) / bound
    growth_ok = bool(np.all(excess <= rtol))
    if not growth_ok:
        i = int(np.argmax(excess))
        violations.append(
            Violation("growth_bound", "K(x,y) <= K0 (x^alpha y^beta + x^beta y^alpha)",
                      (float(x[i]), float(y[i])), float(k_xy[i]))
        )

    g = np.linspace(NONDEGENERACY_LOW, 1.0, grid_nodes)
    gx, gy = np.meshgrid(g, g, indexing="ij")
    kg = kernel_eval(spec, gx, gy)
    imin = np.unravel_index(int(np.argmin(kg)), kg.shape)
    observed_min = float(kg[imin])
    nondeg_ok = observed_min >= spec.k0 * (1.0 - rtol)
    if not nondeg_ok:
        violations.append(
            Violation("nondegeneracy", "min over [1/4,1]^2 of K >= k0",
                      (float(gx[imin]), float(gy[imin])), observed_min)
        )
    return ValidationOutcome(
        homogeneity=hom_ok,
        growth_bound=growth_ok,
        nondegeneracy=nondeg_ok,
        observed_min=observed_min,
        max_homogeneity_deviation=float(dev.max()),
        violations=tuple(violations),
    )


# --------------------------------------------------------------------------
# h_lambda


@dataclass(frozen=True)
class HLambda:
    value: float
    method: str
    estimated_error: float

    def __post_init__(self):
        if not (self.value > 0.0 and math.isfinite(self.value)):
            raise DomainError(f"h_lambda must be positive and finite, got {self.value}")


def h_lambda_inverse_closed_form(spec: KernelSpec) -> float:
    """Beta-function reduction of the defining double integral (product kernel).

    The inner integral gives ``s^a (1-s)^(-a) / a + s^b (1-s)^(-b) / b`` after
    multiplying by ``s^(-2 lam)``, and each term is a Beta integral
    ``B(1 - b, 1 - a)``, so the sum is ``G(1-a) G(1-b) / G(2 - 2 lam) * 2 lam / (a b)``.
    """
    if not spec.is_product:
        raise KernelSpecError("closed form only exists for product kernels")
    a, b, lam = spec.alpha, spec.beta, spec.lam
    return gamma(1.0 - a) * gamma(1.0 - b) / gamma(2.0 - 2.0 * lam) * (2.0 * lam) / (a * b)


def _inner_product(spec: KernelSpec, s: float) -> float:
    # integral over t in (1 - s, inf) of K(s, t) t^(-1-2 lam), term by term
    lam2 = 2.0 * spec.lam
    w = 1.0 - s
    total = 0.0
    for coef, p, q in spec.power_terms():
        total += coef * s**p * w ** (q - lam2) / (lam2 - q)
    return total


def _inner_custom(spec: KernelSpec, s: float, tail_tol: float) -> tuple[float, float]:
    # t = (1 - s) e^r; the truncation point R makes the K0 power-law tail <= tail_tol
    lam2 = 2.0 * spec.lam
    w = 1.0 - s
    a, b = spec.alpha, spec.beta
    # tail beyond t = T is at most K0 (s^a T^(b-2lam)/(2lam-b) + s^b T^(a-2lam)/(2lam-a));
    # bound it with the slower of the two decay rates
    slow = min(lam2 - b, lam2 - a)
    amp = spec.K0 * (s**a / (lam2 - b) + s**b / (lam2 - a))
    T = max(w, (amp / tail_tol) ** (1.0 / slow)) if amp > 0 else w
    R = math.log(T / w)

    def f(r):
        t = w * math.exp(r)
        return float(spec.evaluator(np.asarray(s), np.asarray(t))) * t ** (-lam2)

    # split the log-range into unit pieces so quad sees a smooth integrand
    edges = np.linspace(0.0, R, max(2, int(math.ceil(R)) + 1))
    val = 0.0
    err = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        v, e = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=1e-13, limit=100)
        val += v
        err += e
    return val, err + tail_tol


def h_lambda_inverse_quadrature(spec: KernelSpec, rtol: float = 1e-11,
                                tail_tol: float = 1e-12) -> tuple[float, float]:
    """Adaptive quadrature of the double integral defining ``1/h_lambda``.

    Returns ``(value, error_estimate)``.  The outer integral is split at 1/2
    and the endpoint singularities are removed by ``u = s^(1-beta)`` on the
    left half and ``v = (1-s)^(1-beta)`` on the right half.
    """
    lam2 = 2.0 * spec.lam
    b = spec.beta
    if spec.is_product:
        def inner(s):
            return _inner_product(spec, s), 0.0
    else:
        def inner(s):
            return _inner_custom(spec, s, tail_tol)

    inner_err = [0.0]
    e = 1.0 - b

    def left(u):
        s = u ** (1.0 / e)
        v, er = inner(s)
        inner_err[0] = max(inner_err[0], er)
        # s^(-2 lam) ds = s^(-2 lam) * s^b / (1 - b) du
        return s ** (b - lam2) * v / e

    def right(v):
        w = v ** (1.0 / e)
        s = 1.0 - w
        val, er = inner(s)
        inner_err[0] = max(inner_err[0], er)
        return s ** (-lam2) * w**b * val / e

    opts = dict(epsabs=0.0, epsrel=min(rtol, 1e-12), limit=400)
    # quad warns when the requested tolerance meets roundoff; its error
    # estimate is still returned and checked against rtol below
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        vl, el = integrate.quad(left, 0.0, 0.5**e, **opts)
        vr, er_ = integrate.quad(right, 0.0, 0.5**e, **opts)
    val = vl + vr
    err = el + er_ + inner_err[0]
    if not (err <= rtol * abs(val)):
        raise QuadratureError("h_lambda quadrature did not converge", err / abs(val))
    return val, err


def compute_h_lambda(spec: KernelSpec, method: str = "auto", rtol: float = 1e-11) -> HLambda:
    """Return the constant making ``h = 1`` a solution of the profile equation.

    ``method`` is ``"closed_form"`` (product kernels only), ``"quadrature"``
    or ``"auto"`` (closed form when available).
    """
    if method == "auto":
        method = "closed_form" if spec.is_product else "quadrature"
    if method == "closed_form":
        inv = h_lambda_inverse_closed_form(spec)
        return HLambda(1.0 / inv, "closed_form", 1e-14)
    if method == "quadrature":
        inv, err = h_lambda_inverse_quadrature(spec, rtol=rtol)
        return HLambda(1.0 / inv, "quadrature", err / inv)
    raise ValueError(f"unknown method {method!r}")


# --------------------------------------------------------------------------
# log-variable weight


def log_G(spec: KernelSpec, h_lambda: HLambda | float, Y, Z):
    """Natural log of the weight ``G(Y, Z)``."""
    hl = h_lambda.value if isinstance(h_lambda, HLambda) else float(h_lambda)
    Y = np.asarray(Y, dtype=float)
    Z = np.asarray(Z, dtype=float)
    lam2 = 2.0 * spec.lam
    if spec.is_product:
        a, b = spec.alpha, spec.beta
        logk = np.logaddexp(a * Y + b * Z, b * Y + a * Z)
    else:
        logk = np.log(kernel_eval(spec, np.exp(Y), np.exp(Z)))
    return math.log(hl) + (1.0 - lam2) * Y - lam2 * Z + logk


def G_eval(spec: KernelSpec, h_lambda: HLambda | float, Y, Z):
    """``G(Y, Z) = h_lambda e^((1-2 lam) Y) e^(-2 lam Z) K(e^Y, e^Z)``."""
    lg = log_G(spec, h_lambda, Y, Z)
    if np.any(~np.isfinite(lg)) or np.any(lg > _LOG_MAX):
        bad = float(np.max(lg)) if np.ndim(lg) else float(lg)
        raise WeightOverflowError(f"G overflows double precision (log G = {bad:.1f})")
    out = np.exp(lg)
    return float(out) if np.ndim(out) == 0 else out


def check_gdec(spec: KernelSpec, h_lambda: HLambda | float, Y, Z, eps):
    """Relative residual of ``G(Y-eps, Z-eps) = G(Y, Z) e^(-(1-2 lam) eps)``."""
    g0 = G_eval(spec, h_lambda, Y, Z)
    g1 = G_eval(spec, h_lambda, np.asarray(Y) - eps, np.asarray(Z) - eps)
    res = np.abs(g1 - g0 * np.exp(-(1.0 - 2.0 * spec.lam) * np.asarray(eps))) / g0
    return float(res) if np.ndim(res) == 0 else res
