"""Gamma and Beta functions on the small positive range used by the kernels.

Only arguments in (0, 2] occur when reducing the h_lambda integral, so a
compact Lanczos series (g = 7, nine terms) with the reflection formula below
1/2 is sufficient; it is accurate to a few ulps there.
"""

from __future__ import annotations

import math

_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def gamma(x: float) -> float:
    """Gamma function for real ``x`` > 0 via the Lanczos approximation."""
    if not x > 0.0 or not math.isfinite(x):
        raise ValueError(f"gamma requires a finite positive argument, got {x!r}")
    if x < 0.5:
        return math.pi / (math.sin(math.pi * x) * gamma(1.0 - x))
    x -= 1.0
    acc = _LANCZOS_COEF[0]
    for k in range(1, len(_LANCZOS_COEF)):
        acc += _LANCZOS_COEF[k] / (x + k)
    t = x + _LANCZOS_G + 0.5
    return math.sqrt(2.0 * math.pi) * t ** (x + 0.5) * math.exp(-t) * acc


def beta(a: float, b: float) -> float:
    """Euler Beta function B(a, b) = Gamma(a) Gamma(b) / Gamma(a + b)."""
    return gamma(a) * gamma(b) / gamma(a + b)
