"""Exception taxonomy shared across the package."""


class CapstatError(Exception):
    """Base class for package-specific errors."""


class DomainError(CapstatError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class QuadratureAccuracyError(CapstatError):
    """Adaptive integration exhausted its budget.

    Carries the best estimate produced so far in ``result``.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class NonSmoothPointError(CapstatError):
    """A derivative was requested beyond the analytic order at a kink."""


class GluingError(CapstatError):
    """Derivative matching failed at a gluing knot.

    ``violations`` lists ``(order, mismatch)`` pairs.
    """

    def __init__(self, message, violations):
        super().__init__(message)
        self.violations = violations


class UnsupportedHistoryError(CapstatError):
    """Initial point -inf requested for a function without a known
    left support bound of its k-th derivative."""


class MonotonicityError(CapstatError):
    """A clock function failed the strictly-increasing requirement."""


class BracketRangeError(CapstatError):
    """Inversion target lies outside the reachable range of the clock."""


class BoundarySingularityError(CapstatError):
    """Derivative evaluation exactly at an initial point where the
    representation blows up."""


class ConstructionError(CapstatError):
    """A building-block self-check failed (dual computations disagree,
    or a stationarity residual exceeds tolerance)."""


class ValidationError(CapstatError):
    """A cross-check (finite differences, dual route) disagreed."""


class StageError(CapstatError):
    """A pipeline stage failed; carries the stage name and achieved error."""

    def __init__(self, stage, achieved, message=None, payload=None):
        if message is None:
            message = f"stage '{stage}' failed (achieved error {achieved:.6e})"
        super().__init__(message)
        self.stage = stage
        self.achieved = achieved
        self.payload = payload


class FitFailureError(StageError):
    def __init__(self, achieved, message=None, payload=None):
        super().__init__("fit", achieved, message, payload)


class SpanFailureError(StageError):
    def __init__(self, achieved, message=None, payload=None):
        super().__init__("span", achieved, message, payload)


class ApproximationFailureError(StageError):
    pass
