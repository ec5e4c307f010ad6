"""Exception hierarchy."""

from __future__ import annotations


class NonlocalError(Exception):
    """Base class for all library errors."""


class DomainError(NonlocalError, ValueError):
    """An argument lies outside the admissible parameter range."""


class QuadratureError(NonlocalError):
    """A quadrature did not reach the requested tolerance.

    Attributes
    ----------
    partial : object
        Best value obtained.
    achieved : float
        Achieved error estimate.
    """

    def __init__(self, message, partial=None, achieved=None):
        super().__init__(message)
        self.partial = partial
        self.achieved = achieved


class IllConditionedError(NonlocalError):
    """The principal value integral is not well defined at a point."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class ResolutionError(NonlocalError):
    """The grid is too coarse for the requested measurement."""

    def __init__(self, message, finest_usable=None):
        super().__init__(message)
        self.finest_usable = finest_usable


class CertificationError(NonlocalError):
    """No parameter choice produced a passing certificate."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class SolverDivergence(NonlocalError):
    """The pseudo-time iteration blew up."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])


class DegenerateFitError(NonlocalError):
    """A log-log fit has no usable tail."""

    def __init__(self, message, diagnostic=None):
        super().__init__(message)
        self.diagnostic = diagnostic or {}
