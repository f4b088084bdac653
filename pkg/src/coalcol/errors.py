"""Exception types shared across the package.

Every error raised on purpose by this library derives from
:class:`CoalcolError`, so callers can catch the whole family with one
clause.  The subclasses additionally derive from the closest builtin
(``ValueError`` for bad inputs, ``RuntimeError`` for computations that
went wrong at runtime) so that generic handling keeps working.
"""

from __future__ import annotations


class CoalcolError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(CoalcolError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigError(CoalcolError, ValueError):
    """An experiment configuration is malformed or violates a hypothesis."""


class UnsupportedMeasure(CoalcolError, ValueError):
    """The measure lacks the structure an operation requires
    (e.g. no power-law density component near 0)."""


class InfeasibleParams(CoalcolError, ValueError):
    """No bounding parameters satisfy the requested constraint set.

    ``constraint`` names the violated inequality.
    """

    def __init__(self, message: str, constraint: str | None = None):
        super().__init__(message)
        self.constraint = constraint


class NumericalError(CoalcolError, RuntimeError):
    """Quadrature or inversion failed to reach the requested tolerance.

    ``achieved`` carries the error estimate that was actually reached.
    """

    def __init__(self, message: str, achieved: float | None = None):
        super().__init__(message)
        self.achieved = achieved


class ConsistencyError(NumericalError):
    """Two independent computation routes that must agree did not.

    This usually signals a quadrature failure or a loss of precision,
    not a caller mistake.
    """


class ResourceLimit(CoalcolError, RuntimeError):
    """An exact computation was requested beyond its configured size cap."""


class NotYetValid(CoalcolError, RuntimeError):
    """A bounding construction that is only guaranteed for large sizes
    produced an invalid object (e.g. a negative probability) at the
    requested size.  ``detail`` carries the offending entry.
    """

    def __init__(self, message: str, detail=None):
        super().__init__(message)
        self.detail = detail


class DominanceNotVerified(CoalcolError, RuntimeError):
    """A coupled sampler was requested before (or after a failed)
    stochastic-dominance verification."""
