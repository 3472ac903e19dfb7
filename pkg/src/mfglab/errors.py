"""Exception types shared across the package."""

from __future__ import annotations


class MFGLabError(Exception):
    """Base class for all package-specific errors."""


class DomainError(MFGLabError):
    """A function evaluated to a non-finite value where a finite one is required."""


class DimensionError(MFGLabError):
    """An operation was asked for in an unsupported dimension."""


class CouplingError(MFGLabError):
    """Two random variables that must share a sample space do not."""


class BracketError(MFGLabError):
    """A search bracket is too small: the minimum is attained on its boundary."""


class KinkError(MFGLabError):
    """A derivative-based probe landed on (or too close to) a declared kink."""


class PreconditionError(MFGLabError):
    """A numerical precondition (monotonicity, coercivity, sign change) failed."""


class BranchError(MFGLabError):
    """Branch enumeration was refused (too many multi-minimizer atoms)."""


class NumericalError(MFGLabError):
    """An iteration produced NaN/inf; carries the trace for diagnosis."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace
