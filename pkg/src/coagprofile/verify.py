"""Numerical certificates for a computed profile.

Every quantity here is an observed value on the sampled profile: bounds
from above and below, dyadic averages, the exponential growth constant, the
relative flux-balance residual and an optional log-period of the small-size
oscillation.  Nothing is compared against published constants because none
exist; the certificates are finiteness and positivity.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DomainError
from .operator import QuadratureConfig, apply_T_values, lin_exp
from .profile import Profile, evaluate_profile

LN2 = math.log(2.0)
LN10 = math.log(10.0)


def _interior(p: Profile, margin: float) -> tuple[float, float]:
    g = p.grid
    lo, hi = g.x_min_log + margin, g.x_max_log - margin
    if not lo < hi:
        raise DomainError("grid has no interior for the requested margin")
    return lo, hi


def _check_window(p: Profile, window, margin: float) -> tuple[float, float]:
    lo, hi = float(window[0]), float(window[1])
    ilo, ihi = _interior(p, margin)
    tol = 1e-9 * p.grid.dx
    if not lo < hi or lo < ilo - tol or hi > ihi + tol:
        raise DomainError(f"window [{lo}, {hi}] is not inside the interior [{ilo}, {ihi}]")
    return lo, hi


def _window_mask(p: Profile, window) -> np.ndarray:
    X = p.grid.nodes
    tol = 1e-9 * p.grid.dx
    return (X >= window[0] - tol) & (X <= window[1] + tol)


def default_small_x_window(p: Profile, margin: float = 2.0, decades: float = 2.0):
    """The leftmost ``decades`` of the interior."""
    lo, hi = _interior(p, margin)
    return (lo, min(hi, lo + decades * LN10))


# --------------------------------------------------------------------------
# bounds


def bounds_report(p: Profile, small_x_window=None, margin: float = 2.0) -> tuple[float, float]:
    """``(max h over interior nodes, min h over the small-x window)``."""
    if small_x_window is None:
        small_x_window = default_small_x_window(p, margin)
    win = _check_window(p, small_x_window, margin)
    inner = p.grid.interior_mask(margin)
    sel = _window_mask(p, win)
    if not sel.any():
        raise DomainError("small-x window contains no grid nodes")
    return float(p.values[inner].max()), float(p.values[sel].min())


def certify_bounds(sup_h: float, inf_h: float) -> bool:
    return math.isfinite(sup_h) and inf_h > 0.0


# --------------------------------------------------------------------------
# dyadic averages


def _weighted_integral(p: Profile, a: float, b: float) -> tuple[float, float, float]:
    """``int_a^b e^X H(X) dX`` for the piecewise-linear interpolant, exactly.

    Also returns the smallest and largest interpolant value on ``[a, b]``.
    """
    g = p.grid
    X = g.nodes
    inner = X[(X > a) & (X < b)]
    pts = np.concatenate(([a], inner, [b]))
    vals = evaluate_profile(p, pts)
    total = float(np.sum(lin_exp(1.0, pts[:-1], pts[1:], vals[:-1], vals[1:])))
    return total, float(vals.min()), float(vals.max())


def dyadic_average(p: Profile, X_R: float) -> float:
    """Mean of ``h`` over ``x in [R/2, R]`` with ``R = e^X_R``."""
    total, lo, hi = _weighted_integral(p, X_R - LN2, X_R)
    # the interpolant's extremes on the interval bound its mean; clip roundoff
    return min(max(total / (0.5 * math.exp(X_R)), lo), hi)


def dyadic_range(p: Profile, r_decades: float, margin: float = 2.0) -> tuple[float, float]:
    if not r_decades >= 1:
        raise DomainError("r_decades must be at least 1")
    ilo, ihi = _interior(p, margin)
    lo = -r_decades * LN10
    if lo - LN2 < ilo - 1e-9 * p.grid.dx or ihi < 0.0:
        raise DomainError(
            f"interior [{ilo}, {ihi}] cannot hold [R/2, R] for {r_decades} decades below x = 1"
        )
    return lo, 0.0


def dyadic_average_sup(p: Profile, r_decades: float, margin: float = 2.0) -> float:
    """Max over grid nodes ``X_R`` in ``[-r_decades ln 10, 0]`` of the dyadic mean."""
    lo, hi = dyadic_range(p, r_decades, margin)
    X = p.grid.nodes
    tol = 1e-9 * p.grid.dx
    Rs = X[(X >= lo - tol) & (X <= hi + tol)]
    if Rs.size == 0:
        raise DomainError("no grid node lies in the dyadic range")
    return max(dyadic_average(p, float(r)) for r in Rs)


# --------------------------------------------------------------------------
# growth bound


def growth_rate_check(p: Profile, margin: float = 2.0) -> float:
    """Smallest ``D >= 0`` with ``H_j <= 2 H_i e^(D (X_j - X_i))`` for interior ``i < j``.

    Nodes where ``H = 0`` are skipped.  Returns ``inf`` when fewer than two
    positive interior nodes remain.
    """
    inner = p.grid.interior_mask(margin)
    X = p.grid.nodes[inner]
    H = p.values[inner]
    pos = H > 0.0
    X, H = X[pos], H[pos]
    if H.size < 2:
        return math.inf
    iu, ju = np.triu_indices(H.size, k=1)
    D = np.log(H[ju] / (2.0 * H[iu])) / (X[ju] - X[iu])
    return max(0.0, float(D.max()))


def growth_zero_nodes(p: Profile, margin: float = 2.0) -> int:
    return int(np.count_nonzero(p.values[p.grid.interior_mask(margin)] == 0.0))


# --------------------------------------------------------------------------
# flux residual


def flux_residual(p: Profile, quad: QuadratureConfig | None = None, threads: int = 1,
                  Th: np.ndarray | None = None) -> float:
    """Sup over interior nodes of ``|x^2 g - flux| / (x^2 g)``.

    Nodes with ``h = 0`` are skipped; ``nan`` when every interior node is
    zero.
    """
    quad = quad or QuadratureConfig()
    if Th is None:
        Th = apply_T_values(p, quad, threads)
    X = p.grid.nodes
    inner = p.grid.interior_mask(quad.interior_margin) & (p.values > 0.0)
    if not inner.any():
        return math.nan
    w = np.exp((1.0 - 2.0 * p.lam) * X[inner])
    x2g = w * p.values[inner]
    fl = w * Th[inner]
    return float(np.max(np.abs(x2g - fl) / x2g))


# --------------------------------------------------------------------------
# oscillation


@dataclass(frozen=True)
class Oscillation:
    period: float | None
    peak_ratio: float
    flag: str | None = None


def oscillation_diagnostic(p: Profile, window=None, margin: float = 2.0,
                           pad: int = 8, threshold: float = 3.0) -> Oscillation:
    """Dominant log-period of ``H`` minus its mean over ``window``.

    The spectrum is the zero-padded real FFT magnitude.  A period is reported
    when the peak exceeds ``threshold`` times the median magnitude and at
    least four periods fit in the window.
    """
    if window is None:
        lo, hi = _interior(p, margin)
        window = (lo, 0.5 * (lo + hi))
    win = _check_window(p, window, margin)
    sel = _window_mask(p, win)
    H = p.values[sel]
    if H.size < 8:
        return Oscillation(None, 0.0, "window_too_short")
    sig = H - H.mean()
    spec = np.abs(np.fft.rfft(sig, n=pad * H.size))[1:]
    freqs = np.fft.rfftfreq(pad * H.size, d=p.grid.dx)[1:]
    med = float(np.median(spec))
    k = int(np.argmax(spec))
    peak = float(spec[k])
    ratio = peak / med if med > 0.0 else (math.inf if peak > 0.0 else 0.0)
    if not ratio > threshold:
        return Oscillation(None, ratio, None)
    period = 1.0 / float(freqs[k])
    if 4.0 * period > (H.size - 1) * p.grid.dx:
        return Oscillation(None, ratio, "window_shorter_than_4_periods")
    return Oscillation(period, ratio, None)


def linearized_oscillation_exponent(kernel, h_lambda, guess: complex = 0.1 + 0.5j,
                                    tol: float = 1e-13, max_iter: int = 60) -> complex:
    """Root ``mu`` of the dispersion relation of ``h = 1 + eps e^(mu X)``.

    Linearizing the fixed-point equation about ``h = 1`` gives
    ``m(mu) = 1`` with ``m(mu) = h_lam sum_terms [B(a+mu, 1+c)/(-c) +
    B(a, 1+c+mu)/(-(c+mu))]``, ``a = 1 - 2 lam + p``, ``c = q - 2 lam``.
    The predicted log-period of the small-size oscillation is
    ``2 pi / Im(mu)``.  Solved with the secant method on complex Beta
    functions from :mod:`scipy.special` (log-gamma branch).
    """
    from scipy.special import loggamma

    h_lambda = float(getattr(h_lambda, "value", h_lambda))
    lam = kernel.lam
    terms = [(k, 1.0 - 2.0 * lam + p, q - 2.0 * lam) for k, p, q in kernel.power_terms()]

    def beta(x, y):
        return np.exp(loggamma(x) + loggamma(y) - loggamma(x + y))

    def m(mu):
        s = 0.0
        for k, a, c in terms:
            s = s + k * (beta(a + mu, 1.0 + c) / (-c) + beta(a, 1.0 + c + mu) / (-(c + mu)))
        return h_lambda * s - 1.0

    z0, z1 = complex(guess), complex(guess) * (1.0 + 1e-3)
    f0, f1 = m(z0), m(z1)
    for _ in range(max_iter):
        if f1 == f0:
            break
        z2 = z1 - f1 * (z1 - z0) / (f1 - f0)
        z0, f0, z1, f1 = z1, f1, z2, m(z2)
        if abs(z1 - z0) <= tol * max(1.0, abs(z1)):
            break
    return complex(z1)


# --------------------------------------------------------------------------
# combined report


@dataclass(frozen=True)
class VerifyConfig:
    margin: float = 2.0
    small_x_decades: float = 2.0
    r_decades: float = 6.0
    osc_window: tuple[float, float] | None = None

    def __post_init__(self):
        if not self.margin >= 0.0:
            raise DomainError("margin must be nonnegative")
        if not self.small_x_decades > 0.0:
            raise DomainError("small_x_decades must be positive")
        if not self.r_decades >= 1:
            raise DomainError("r_decades must be at least 1")


@dataclass(frozen=True)
class VerificationReport:
    sup_h: float
    inf_h_small_x: float
    dyadic_avg_sup: float
    min_growth_D: float
    flux_residual_sup: float
    osc_period: float | None
    windows: dict
    left_window_max: float
    left_plateau_mean: float
    certified: bool
    flags: tuple[str, ...] = field(default=())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["flags"] = list(self.flags)
        d["windows"] = {k: list(v) for k, v in self.windows.items()}
        return d

    def summary(self) -> str:
        rows = [
            ("sup_h", self.sup_h),
            ("inf_h_small_x", self.inf_h_small_x),
            ("dyadic_avg_sup", self.dyadic_avg_sup),
            ("min_growth_D", self.min_growth_D),
            ("flux_residual_sup", self.flux_residual_sup),
            ("osc_period", self.osc_period),
            ("left_window_max", self.left_window_max),
            ("left_plateau_mean", self.left_plateau_mean),
        ]
        lines = [f"{k:<20s} {'absent' if v is None else format(v, '.10g')}" for k, v in rows]
        lines.append(f"{'certified':<20s} {self.certified}")
        if self.flags:
            lines.append(f"{'flags':<20s} {', '.join(self.flags)}")
        return "\n".join(lines)


def verify_profile(p: Profile, cfg: VerifyConfig | None = None,
                   quad: QuadratureConfig | None = None, threads: int = 1) -> VerificationReport:
    """Run every check with windows derived from ``cfg``."""
    cfg = cfg or VerifyConfig()
    quad = quad or QuadratureConfig(interior_margin=cfg.margin)
    flags: list[str] = []
    small = default_small_x_window(p, cfg.margin, cfg.small_x_decades)
    sup_h, inf_h = bounds_report(p, small, cfg.margin)
    sel = _window_mask(p, small)
    left_max = float(p.values[sel].max())
    left_mean = float(p.values[sel].mean())

    r_dec = cfg.r_decades
    fit = math.floor((-(_interior(p, cfg.margin)[0] + LN2)) / LN10 * 1e6) / 1e6
    if fit < r_dec:
        # a gauge shift can pull the left end inside the requested range
        r_dec = fit
        flags.append("dyadic_range_clipped")
    dyad = dyadic_range(p, r_dec, cfg.margin)
    C = dyadic_average_sup(p, r_dec, cfg.margin)

    D = growth_rate_check(p, cfg.margin)
    if growth_zero_nodes(p, cfg.margin):
        flags.append("growth_zero_nodes_skipped")

    res = flux_residual(p, quad, threads)
    if np.any(p.values[p.grid.interior_mask(quad.interior_margin)] == 0.0):
        flags.append("flux_zero_nodes_skipped")

    if cfg.osc_window is None:
        lo, hi = _interior(p, cfg.margin)
        osc_win = (lo, 0.5 * (lo + hi))
    else:
        osc_win = tuple(cfg.osc_window)
    osc = oscillation_diagnostic(p, osc_win, cfg.margin)
    if osc.flag:
        flags.append(f"oscillation_{osc.flag}")

    certified = certify_bounds(sup_h, inf_h) and math.isfinite(C) and math.isfinite(D)
    return VerificationReport(
        sup_h=sup_h,
        inf_h_small_x=inf_h,
        dyadic_avg_sup=C,
        min_growth_D=D,
        flux_residual_sup=res,
        osc_period=osc.period,
        windows={"small_x": small, "dyadic_R": dyad, "oscillation": osc_win},
        left_window_max=left_max,
        left_plateau_mean=left_mean,
        certified=certified,
        flags=tuple(flags),
    )
