"""Exception hierarchy. The CLI maps these onto exit codes."""


class DPPError(Exception):
    """Base class for library errors."""


class ValidationError(DPPError, ValueError):
    """Input violates a structural requirement (bad eigenvalue, bad config...)."""


class DomainError(DPPError, ValueError):
    """Argument outside the domain of an operation (cell out of range, overlap...)."""


class ToleranceError(DPPError):
    """A numerical tolerance could not be met.

    ``achieved`` carries the best value that was reached, if any.
    """

    def __init__(self, message, achieved=None, kind="tolerance"):
        super().__init__(message)
        self.achieved = achieved
        self.kind = kind


class SizeGuardError(DPPError):
    """Exact computation would be too large; use the Monte Carlo route."""
