"""Exception hierarchy shared by the library and the CLI."""

from __future__ import annotations


class CoagError(Exception):
    """Base class for all library errors."""


class DomainError(CoagError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class KernelSpecError(CoagError, ValueError):
    """A kernel specification violates a structural constraint."""


class ConfigError(CoagError, ValueError):
    """A configuration file or override could not be interpreted."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class QuadratureError(CoagError, RuntimeError):
    """Numerical quadrature failed to reach the requested tolerance."""

    def __init__(self, message: str, achieved_error: float):
        super().__init__(f"{message} (achieved error estimate {achieved_error:.3e})")
        self.achieved_error = achieved_error


class WeightOverflowError(CoagError, OverflowError):
    """A weight or kernel value overflowed double precision."""


class TrivialFixedPointError(CoagError, RuntimeError):
    """The iteration collapsed onto the zero profile."""


class NumericalFailure(CoagError, RuntimeError):
    """Generic failure of a time-stepping or iterative scheme."""
