"""The fixed-point operator ``T`` on log-grid profiles and the mass flux.

In log variables ``u = Y - X``, ``v = Z - X`` the operator reads::

    (T H)(X) = int_{u<0} int_{v > l(u)} G(u, v) H(X+u) H(X+v) dv du,
    l(u) = log(1 - e^u),

and for a product kernel ``G`` is a sum of terms ``h_lambda e^(a u) e^(c v)``
with ``a = 1 - 2 lam + p``, ``c = q - 2 lam < 0``.  The ``v``-range splits
into ``v > 0`` (large partner, separable in ``u`` and ``v``) and the head
``l(u) < v < 0`` where the region boundary couples the two variables.

``H`` is piecewise linear in ``X``, so every contribution is a bilinear
form in the nodal values whose coefficients depend only on node offsets.
Separable parts are integrated in closed form.  The head coefficients are
integrated over each pair of hat functions: the inner ``v`` integral is
closed form and the outer ``u`` integral uses Gauss-Legendre on pieces cut
at every point where the boundary ``l(u)`` crosses a node, so each piece
has a smooth integrand.  The power-law singularity at ``u -> 0`` is thereby
integrated exactly rather than approximated.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError, KernelSpecError, WeightOverflowError
from .kernel import HLambda, KernelSpec
from .profile import (
    ConstantTail,
    ExponentialTail,
    Profile,
    ZeroTail,
    left_value,
)


@dataclass(frozen=True)
class QuadratureConfig:
    """Discretisation controls for :func:`apply_T`.

    ``panels_per_cell`` subdivides every smooth piece of the head integrals
    (eight Gauss-Legendre nodes per panel).  ``tail_cutoff_tol`` bounds the
    neglected far-field weight of the head arms.  Nodes closer than
    ``interior_margin`` (in X) to either end are excluded from residuals.
    """

    panels_per_cell: int = 1
    tail_cutoff_tol: float = 1e-15
    interior_margin: float = 2.0

    def __post_init__(self):
        if self.panels_per_cell < 1:
            raise DomainError("panels_per_cell must be >= 1")
        if not (0.0 < self.tail_cutoff_tol <= 1e-4):
            raise DomainError("tail_cutoff_tol must lie in (0, 1e-4]")
        if self.interior_margin < 0.0:
            raise DomainError("interior_margin must be >= 0")


_GL_NODES = 8
_GL_X, _GL_W = np.polynomial.legendre.leggauss(_GL_NODES)
_SERIES_TERMS = 26


def _moments(sigma):
    """``(int_0^1 (1-t) e^(s t) dt, int_0^1 t e^(s t) dt)`` without cancellation."""
    s = np.asarray(sigma, dtype=float)
    small = np.abs(s) < 1.0
    ss = np.where(small, s, 0.0)
    # series: sum s^k / (k! (k+1) (k+2)) and sum s^k / (k! (k+2))
    phi = np.zeros_like(ss)
    e2 = np.zeros_like(ss)
    term = np.ones_like(ss)
    for k in range(_SERIES_TERMS):
        phi = phi + term / ((k + 1) * (k + 2))
        e2 = e2 + term / (k + 2)
        term = term * ss / (k + 1)
    sl = np.where(small, 1.0, s)
    e1_l = np.expm1(sl) / sl
    e2_l = (sl * np.exp(sl) - np.expm1(sl)) / sl**2
    phi = np.where(small, phi, e1_l - e2_l)
    e2 = np.where(small, e2, e2_l)
    return phi, e2


def lin_exp(c, v1, v2, y1, y2):
    """``int_{v1}^{v2} e^(c v) y(v) dv`` for ``y`` linear from ``y1`` to ``y2``.

    Returns 0 where ``v2 <= v1``.
    """
    v1 = np.asarray(v1, dtype=float)
    L = np.maximum(np.asarray(v2, dtype=float) - v1, 0.0)
    phi, e2 = _moments(c * L)
    return np.exp(c * v1) * L * (y1 * phi + y2 * e2)


def log1mexp(u):
    """``log(1 - e^u)`` for ``u < 0``."""
    return np.log(-np.expm1(u))


# --------------------------------------------------------------------------
# head coefficients


def _head_J(c, dx, q, s):
    """``int_{max(s, .)}^{0} e^(c v) psi_q(v) dv`` over the support of hat ``q``."""
    vl = (q - 1) * dx
    vm = q * dx
    vr = np.minimum((q + 1) * dx, 0.0)
    lo = np.maximum(s, vl)
    left = np.where(lo < vm, lin_exp(c, lo, vm, (lo - vl) / dx, 1.0), 0.0)
    lo2 = np.maximum(s, vm)
    has_right = vm < vr
    right = np.where(
        has_right & (lo2 < vr),
        lin_exp(c, lo2, np.where(has_right, vr, lo2), ((q + 1) * dx - lo2) / dx,
                ((q + 1) * dx - vr) / dx),
        0.0,
    )
    return left + right


def head_coefficients(a: float, c: float, dx: float, depth_u: int, depth_v: int,
                      panels: int = 1):
    """Head weights ``S[p, q]`` for one exponential term ``e^(a u + c v)``.

    Returns ``(p, q, S)`` arrays over the pairs of hat offsets whose supports
    meet the head region ``{u < 0, l(u) < v < 0}``.
    """
    ps, qs = [], []
    for p in range(0, -depth_u - 1, -1):
        u_hi = min((p + 1) * dx, 0.0)
        if u_hi >= 0.0:
            qmin = -depth_v
        else:
            qmin = max(-depth_v, int(math.floor(float(log1mexp(u_hi)) / dx)) - 1)
        qr = np.arange(0, qmin - 1, -1)
        ps.append(np.full(qr.size, p))
        qs.append(qr)
    P = np.concatenate(ps)
    Q = np.concatenate(qs)

    u0 = (P - 1) * dx
    u2 = np.minimum((P + 1) * dx, 0.0)
    cuts = [u0, np.clip(P * dx, u0, u2), u2]
    for off in (-1, 0, 1):
        v = np.minimum((Q + off) * dx, 0.0)
        kink = np.where(v < 0.0, log1mexp(np.where(v < 0.0, v, -1.0)), u0)
        cuts.append(np.clip(kink, u0, u2))
    B = np.sort(np.stack(cuts, axis=1), axis=1)

    # panel edges: every smooth piece [B_k, B_k+1] split into `panels` parts
    frac = np.arange(panels + 1) / panels
    lo = B[:, :-1, None] + (B[:, 1:, None] - B[:, :-1, None]) * frac[None, None, :-1]
    hi = B[:, :-1, None] + (B[:, 1:, None] - B[:, :-1, None]) * frac[None, None, 1:]
    lo = lo.reshape(len(P), -1)
    hi = hi.reshape(len(P), -1)
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    S = np.zeros(len(P))
    Pf = P[:, None].astype(float)
    Qf = Q[:, None].astype(float)
    for xk, wk in zip(_GL_X, _GL_W):
        u = mid + half * xk
        live = half > 0.0
        us = np.where(live, u, -1.0)
        psi = np.maximum(0.0, 1.0 - np.abs(us - Pf * dx) / dx)
        J = _head_J(c, dx, Qf, log1mexp(us))
        f = np.where(live, np.exp(a * us) * psi * J, 0.0)
        S += np.sum(wk * half * f, axis=1)
    return P, Q, S


# --------------------------------------------------------------------------
# assembled weights


@dataclass(frozen=True)
class _Term:
    coef: float  # h_lambda * kernel coefficient
    a: float
    c: float
    Lmat: np.ndarray  # n x (n+1), columns: virtual left node, then nodes 0..n-1
    Rmat: np.ndarray  # n x n
    r_offsets: np.ndarray  # (n-1-i) * dx, for the right tail


@dataclass(frozen=True)
class OperatorWeights:
    n: int
    dx: float
    lam: float
    terms: tuple[_Term, ...]
    head_p: np.ndarray
    head_q: np.ndarray
    head_S: np.ndarray
    pad: int


def _separable_matrices(a: float, c: float, dx: float, n: int):
    i = np.arange(n)[:, None]
    # L: columns k = -1 .. n-1
    k = np.arange(-1, n)[None, :]
    p = k - i
    left_base = float(lin_exp(a, -dx, 0.0, 0.0, 1.0))
    right_base = float(lin_exp(a, 0.0, dx, 1.0, 0.0))
    with np.errstate(over="ignore"):
        scale = np.where(p <= 0, np.exp(a * dx * np.minimum(p, 0)), 0.0)
    Lmat = scale * (left_base * (k >= 0) + right_base * (k < i)) * (p <= 0)
    Lmat[:, 0] += np.exp(-a * (np.arange(n) + 1) * dx) / a
    # R: columns k = 0 .. n-1
    k = np.arange(n)[None, :]
    q = k - i
    left_c = float(lin_exp(c, -dx, 0.0, 0.0, 1.0))
    right_c = float(lin_exp(c, 0.0, dx, 1.0, 0.0))
    scale = np.where(q >= 0, np.exp(c * dx * np.maximum(q, 0)), 0.0)
    Rmat = scale * (right_c * (k < n - 1) + left_c * (k > i)) * (q >= 0)
    r_off = (n - 1 - np.arange(n)) * dx
    return Lmat, Rmat, r_off


@lru_cache(maxsize=16)
def _build_weights(n: int, dx: float, alpha: float, beta: float, h_lambda: float,
                   panels: int, tol: float) -> OperatorWeights:
    lam2 = alpha + beta
    cut = -math.log(tol)
    raw = [(1.0, alpha, beta), (1.0, beta, alpha)]
    if alpha == beta:
        raw = [(2.0, alpha, beta)]
    terms = []
    heads = []
    depth = 0
    for coef, p_exp, q_exp in raw:
        a = 1.0 - lam2 + p_exp
        c = q_exp - lam2
        du = int(math.ceil(cut / (1.0 + a) / dx)) + 2
        dv = int(math.ceil(cut / (1.0 + c) / dx)) + 2
        depth = max(depth, du, dv)
        Lmat, Rmat, r_off = _separable_matrices(a, c, dx, n)
        terms.append(_Term(h_lambda * coef, a, c, Lmat, Rmat, r_off))
        P, Q, S = head_coefficients(a, c, dx, du, dv, panels)
        heads.append((P, Q, h_lambda * coef * S))
    P = np.concatenate([h[0] for h in heads])
    Q = np.concatenate([h[1] for h in heads])
    S = np.concatenate([h[2] for h in heads])
    # merge duplicate offset pairs; np.unique also fixes an ascending order
    key = P.astype(np.int64) * (4 * depth + 8) + Q
    uniq, inv = np.unique(key, return_inverse=True)
    Sm = np.zeros(uniq.size)
    np.add.at(Sm, inv, S)
    first = np.zeros(uniq.size, dtype=np.int64)
    first[inv[::-1]] = np.arange(len(inv))[::-1]
    keep = Sm > 0.0
    Pm = P[first][keep]
    Qm = Q[first][keep]
    Sm = Sm[keep]
    if not np.all(np.isfinite(Sm)):
        raise WeightOverflowError("non-finite head weights")
    return OperatorWeights(n, dx, 0.5 * lam2, tuple(terms), Pm, Qm, Sm, depth + 2)


def operator_weights(kernel: KernelSpec, h_lambda: HLambda, n: int, dx: float,
                     quad: QuadratureConfig) -> OperatorWeights:
    if not kernel.is_product:
        raise KernelSpecError("apply_T needs a power-law (product) kernel")
    return _build_weights(n, float(dx), kernel.alpha, kernel.beta, float(h_lambda.value),
                          quad.panels_per_cell, quad.tail_cutoff_tol)


# --------------------------------------------------------------------------
# application


def _right_tail(tail, c: float):
    """``(amplitude, rate)`` of the right continuation."""
    if isinstance(tail, ExponentialTail):
        return tail.anchor, tail.rate
    if isinstance(tail, ConstantTail):
        return tail.value, 0.0
    return 0.0, 0.0


def _rowsum(M: np.ndarray, v: np.ndarray) -> np.ndarray:
    # numpy pairwise reduction: deterministic, independent of BLAS threading
    return np.sum(M * v[None, :], axis=1)


def _apply_rows(w: OperatorWeights, H: np.ndarray, cL: float, tail, rows: np.ndarray):
    n = w.n
    Hl = np.concatenate(([cL], H))
    out = np.zeros(rows.size)
    for t in w.terms:
        L = _rowsum(t.Lmat[rows], Hl)
        A, r = _right_tail(tail, t.c)
        R = _rowsum(t.Rmat[rows], H) + A * np.exp(t.c * t.r_offsets[rows]) / (r - t.c)
        out += t.coef * L * R
    Hext = np.concatenate((np.full(w.pad, cL), H))
    base = w.pad + rows[:, None]
    prod = Hext[base + w.head_p[None, :]] * Hext[base + w.head_q[None, :]]
    out += np.sum(prod * w.head_S[None, :], axis=1)
    return out


def apply_T_values(p: Profile, quad: QuadratureConfig | None = None, threads: int = 1,
                   chunk: int = 64) -> np.ndarray:
    """Node values of ``T h`` for profile ``p``."""
    quad = quad or QuadratureConfig()
    w = operator_weights(p.kernel, p.h_lambda, p.grid.n, p.grid.dx, quad)
    H = np.asarray(p.values, dtype=float)
    cL = left_value(p.left_tail)
    blocks = [np.arange(s, min(s + chunk, w.n)) for s in range(0, w.n, chunk)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda r: _apply_rows(w, H, cL, p.right_tail, r), blocks))
    else:
        parts = [_apply_rows(w, H, cL, p.right_tail, r) for r in blocks]
    out = np.concatenate(parts)
    if not np.all(np.isfinite(out)):
        raise WeightOverflowError("operator produced non-finite values")
    return np.maximum(out, 0.0)


def _follow_tail(tail, value: float):
    if isinstance(tail, ConstantTail):
        return ConstantTail(value)
    if isinstance(tail, ExponentialTail):
        return ExponentialTail(tail.rate, value)
    return tail


def apply_T(p: Profile, quad: QuadratureConfig | None = None, threads: int = 1) -> Profile:
    """Apply the operator; tails keep their model and follow the new end values.

    A zero left tail under a profile that is positive at the left end is
    flagged ``left_tail_truncation``: the missing small-size mass biases
    the result near the left boundary.
    """
    out = apply_T_values(p, quad, threads)
    flags = ()
    if isinstance(p.left_tail, ZeroTail) and p.values[0] > 0.0:
        flags = ("left_tail_truncation",)
    return p.with_values(
        out,
        left_tail=_follow_tail(p.left_tail, float(out[0])),
        right_tail=_follow_tail(p.right_tail, float(out[-1])),
        flags=flags,
    )


def flux_values(p: Profile, quad: QuadratureConfig | None = None, threads: int = 1,
                Th: np.ndarray | None = None) -> np.ndarray:
    """Mass flux at every node, normalised by ``h_lambda``.

    This is ``h_lambda int_0^x dy g(y) int_{x-y}^inf dz y K(y,z) g(z)`` with
    ``g = x^-(1+2 lam) h``, i.e. ``x^(1-2 lam) (T h)(x)``; for a solution it
    equals ``x^2 g(x)``.
    """
    if Th is None:
        Th = apply_T_values(p, quad, threads)
    return np.exp((1.0 - 2.0 * p.lam) * p.grid.nodes) * Th


def flux(p: Profile, x: float, quad: QuadratureConfig | None = None) -> float:
    """Mass flux at size ``x``, which must be an interior grid node."""
    quad = quad or QuadratureConfig()
    if not x > 0.0:
        raise DomainError("flux needs x > 0")
    X = math.log(x)
    j = (X - p.grid.x_min_log) / p.grid.dx
    i = int(round(j))
    if abs(j - i) > 1e-6 or not (0 <= i < p.grid.n):
        raise DomainError("flux is only evaluated at grid nodes")
    if not p.grid.interior_mask(quad.interior_margin)[i]:
        raise DomainError("x lies outside the interior window")
    return float(flux_values(p, quad)[i])
