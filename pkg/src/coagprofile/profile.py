"""Log-size grids, sampled profiles and their tail extensions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np

from .errors import DomainError
from .kernel import HLambda, KernelSpec

LN10 = math.log(10.0)
# values at or below this are treated as numerically zero when fitting tails
_TINY = 1e-290


@dataclass(frozen=True)
class LogGrid:
    """Uniform grid ``X_i = x_min_log + i * dx`` in the log-size variable."""

    x_min_log: float
    x_max_log: float
    n: int
    # carried through translations so the spacing stays bit-identical
    spacing: float | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not self.x_min_log < self.x_max_log:
            raise DomainError("grid needs x_min_log < x_max_log")
        if self.n < 16:
            raise DomainError("grid needs at least 16 nodes")
        if self.spacing is None:
            object.__setattr__(self, "spacing", (self.x_max_log - self.x_min_log) / (self.n - 1))

    @property
    def dx(self) -> float:
        return self.spacing

    @property
    def nodes(self) -> np.ndarray:
        return self.x_min_log + self.dx * np.arange(self.n)

    @property
    def sizes(self) -> np.ndarray:
        return np.exp(self.nodes)

    def shifted(self, offset: float) -> "LogGrid":
        return LogGrid(self.x_min_log + offset, self.x_max_log + offset, self.n, self.spacing)

    def interior_mask(self, margin: float) -> np.ndarray:
        X = self.nodes
        return (X >= self.x_min_log + margin - 1e-12) & (X <= self.x_max_log - margin + 1e-12)


@dataclass(frozen=True)
class ConstantTail:
    value: float

    def __post_init__(self):
        if not (self.value >= 0.0 and math.isfinite(self.value)):
            raise DomainError("constant tail value must be finite and >= 0")

    def scaled(self, c: float) -> "ConstantTail":
        return ConstantTail(self.value * c)


@dataclass(frozen=True)
class ZeroTail:
    def scaled(self, c: float) -> "ZeroTail":
        return self


@dataclass(frozen=True)
class ExponentialTail:
    """``H(X) = anchor * exp(-rate (X - X_max))`` beyond the right end."""

    rate: float
    anchor: float

    def __post_init__(self):
        if not self.rate > 0.0:
            raise DomainError("exponential tail rate must be positive")
        if not (self.anchor >= 0.0 and math.isfinite(self.anchor)):
            raise DomainError("exponential tail anchor must be finite and >= 0")

    def scaled(self, c: float) -> "ExponentialTail":
        return ExponentialTail(self.rate, self.anchor * c)


LeftTail = Union[ConstantTail, ZeroTail]
RightTail = Union[ConstantTail, ZeroTail, ExponentialTail]


def tail_to_dict(tail) -> dict:
    if isinstance(tail, ConstantTail):
        return {"kind": "constant", "value": tail.value}
    if isinstance(tail, ExponentialTail):
        return {"kind": "exponential", "rate": tail.rate, "anchor": tail.anchor}
    return {"kind": "zero"}


def tail_from_dict(d: dict):
    kind = d.get("kind")
    if kind == "constant":
        return ConstantTail(float(d["value"]))
    if kind == "exponential":
        return ExponentialTail(float(d["rate"]), float(d["anchor"]))
    if kind == "zero":
        return ZeroTail()
    raise DomainError(f"unknown tail kind {kind!r}")


def left_value(tail: LeftTail) -> float:
    return tail.value if isinstance(tail, ConstantTail) else 0.0


@dataclass(frozen=True)
class Profile:
    """Samples of the rescaled profile ``h`` on a log grid.

    Between nodes ``H`` is piecewise linear in ``X``.  On the left, a virtual
    node one spacing below ``x_min_log`` carries the left-tail value and
    ``H`` is constant beyond it.  On the right, ``H`` follows the right-tail
    model beyond ``x_max_log``.
    """

    grid: LogGrid
    values: np.ndarray
    left_tail: LeftTail
    right_tail: RightTail
    kernel: KernelSpec
    h_lambda: HLambda
    gauge_offset: float = 0.0
    flags: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise DomainError(f"expected {self.grid.n} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)) or np.any(v < 0.0):
            raise DomainError("profile values must be finite and nonnegative")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def lam(self) -> float:
        return self.kernel.lam

    def with_values(self, values, **changes) -> "Profile":
        return replace(self, values=np.asarray(values, dtype=float), **changes)

    def scaled(self, c: float) -> "Profile":
        """Multiply samples and tail levels by ``c`` >= 0."""
        return replace(
            self,
            values=self.values * c,
            left_tail=self.left_tail.scaled(c),
            right_tail=self.right_tail.scaled(c),
        )


def make_profile(
    grid: LogGrid,
    values,
    kernel: KernelSpec,
    h_lambda: HLambda,
    left_tail: LeftTail | None = None,
    right_tail: RightTail | None = None,
) -> Profile:
    """Build a profile with the default tails when none are given.

    Defaults: constant continuation of the first sample on the left and an
    exponential fit of the last decade on the right.
    """
    values = np.asarray(values, dtype=float)
    if left_tail is None:
        left_tail = ConstantTail(float(values[0]))
    if right_tail is None:
        right_tail = fit_right_tail(grid, values)
    return Profile(grid, values, left_tail, right_tail, kernel, h_lambda)


def fit_right_tail(grid: LogGrid, values: np.ndarray, span: float = LN10) -> RightTail:
    """Least-squares exponential fit of ``ln h`` over the last ``span`` in X.

    Falls back to :class:`ZeroTail` when fewer than two usable samples exist
    and to a constant continuation when the fitted slope is not negative.
    """
    X = grid.nodes
    v = np.asarray(values, dtype=float)
    anchor = float(v[-1])
    sel = (X >= grid.x_max_log - span - 1e-12) & (v > _TINY)
    if anchor <= _TINY or np.count_nonzero(sel) < 2:
        return ZeroTail()
    slope = np.polyfit(X[sel], np.log(v[sel]), 1)[0]
    if not slope < 0.0:
        return ConstantTail(anchor)
    return ExponentialTail(float(-slope), anchor)


def evaluate_profile(p: Profile, X) -> np.ndarray:
    """``H`` at arbitrary log-sizes, including both tail extensions."""
    X = np.asarray(X, dtype=float)
    g = p.grid
    cL = left_value(p.left_tail)
    nodes = np.concatenate(([g.x_min_log - g.dx], g.nodes))
    vals = np.concatenate(([cL], p.values))
    out = np.interp(X, nodes, vals)
    beyond = X > g.x_max_log
    if np.any(beyond):
        t = p.right_tail
        if isinstance(t, ExponentialTail):
            out[beyond] = t.anchor * np.exp(-t.rate * (X[beyond] - g.x_max_log))
        elif isinstance(t, ConstantTail):
            out[beyond] = t.value
        else:
            out[beyond] = 0.0
    return out


def translate_profile(p: Profile, shift: float) -> Profile:
    """Shift the grid by ``-shift``; samples are unchanged.

    A profile ``H`` becomes ``H(X + shift)``, the log form of the rescaling
    ``a^(1+2 lam) g(a x)`` with ``shift = ln a``.
    """
    if shift == 0.0:
        return p
    return replace(p, grid=p.grid.shifted(-shift), gauge_offset=p.gauge_offset + shift)


def h_to_g(p: Profile) -> np.ndarray:
    """``g_i = exp(-(1 + 2 lam) X_i) h_i``."""
    return np.exp(-(1.0 + 2.0 * p.lam) * p.grid.nodes) * p.values


def g_to_h(grid: LogGrid, g, lam: float) -> np.ndarray:
    return np.exp((1.0 + 2.0 * lam) * grid.nodes) * np.asarray(g, dtype=float)


def g_to_f(g, s: float, grid: LogGrid, sizes=None) -> np.ndarray:
    """Self-similar ansatz ``f(xi) = s^-2 g(xi / s)``.

    ``g`` is sampled on ``grid``; the result is evaluated at ``sizes``
    (default: the grid's own sizes) by linear interpolation of ``g`` in the
    log variable.  Requested sizes whose preimage leaves the grid raise.
    """
    if not s > 0.0:
        raise DomainError("scale factor must be positive")
    g = np.asarray(g, dtype=float)
    xi = grid.sizes if sizes is None else np.asarray(sizes, dtype=float)
    Xq = np.log(xi / s)
    tol = 1e-9 * grid.dx
    if np.any(Xq < grid.x_min_log - tol) or np.any(Xq > grid.x_max_log + tol):
        raise DomainError("requested sizes fall outside the profile support")
    return np.interp(Xq, grid.nodes, g) / s**2


def first_moment(grid: LogGrid, g) -> float:
    """Trapezoidal ``int x g(x) dx = int e^(2X) g(e^X) dX`` over the grid."""
    X = grid.nodes
    return float(np.trapezoid(np.exp(2.0 * X) * np.asarray(g, dtype=float), X))
