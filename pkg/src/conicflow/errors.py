"""Exception types shared across the package."""

from __future__ import annotations


class ConicFlowError(Exception):
    """Base class for all package errors."""


class ConfigurationError(ConicFlowError):
    """A scenario or run parameter violates a precondition."""


class DegenerateMetricError(ConicFlowError):
    """A metric density is not strictly positive."""


class OutOfHorizonError(ConicFlowError):
    """A time outside [0, T) was requested."""


class InfiniteHorizonError(ConicFlowError):
    """No factor collapses, so the singular time is infinite."""


class ClassArithmeticError(ConicFlowError):
    """Cohomology bookkeeping is inconsistent (usually a convention bug)."""


class DegenerateFitError(ConicFlowError):
    """The blow-up fit received unusable data."""


class SingularityReached(ConicFlowError):
    """Step halving was exhausted; carries the last valid state."""

    def __init__(self, message: str, state=None):
        super().__init__(message)
        self.state = state
