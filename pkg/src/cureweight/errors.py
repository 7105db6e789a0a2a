"""Exception hierarchy shared by every module."""


class CureWeightError(Exception):
    """Base class for all package errors."""


class SchemaError(CureWeightError):
    """A declared column is missing from an input file."""


class ParseError(CureWeightError):
    """A value could not be parsed as a number."""


class ValidationError(CureWeightError):
    """Input violates a domain constraint (negative time, bad event code...)."""


class EstimationError(CureWeightError):
    """An estimator is undefined for the supplied data."""


class JackknifeError(EstimationError):
    """Pseudo-observations need at least two subjects."""


class BoundaryError(EstimationError):
    """A logit-scale estimate hit the boundary of (0, 1)."""


class DesignError(CureWeightError):
    """Design matrix is rank deficient."""


class FeasibilityError(CureWeightError):
    """Calibration target is outside the convex hull of the design."""


class ConvergenceError(CureWeightError):
    """An iterative solver failed to converge."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class WeightOverflowError(ConvergenceError):
    """Propensity odds overflowed (fitted probability numerically 1)."""


class InferenceError(CureWeightError):
    """Too many bootstrap replicates failed."""
