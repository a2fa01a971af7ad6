"""Exception hierarchy.

Every error carries a short machine-readable ``code`` and the process exit
status the command-line front end uses for it.
"""

from __future__ import annotations


class RelfactsError(Exception):
    code = "error"
    exit_status = 1


class UsageError(RelfactsError):
    code = "usage"
    exit_status = 2


class ValidationError(RelfactsError, ValueError):
    code = "validation"
    exit_status = 3


class BranchFormError(ValidationError):
    """A branch of the state is entangled across the record/environment cut."""

    code = "branch-form"


class CapacityError(RelfactsError):
    code = "capacity"
    exit_status = 4


class NumericError(RelfactsError, ArithmeticError):
    code = "numeric"
    exit_status = 5


class ZeroBranchError(NumericError):
    """Lüders update on an outcome whose probability is below threshold."""

    code = "zero-branch"

    def __init__(self, probability: float, threshold: float):
        super().__init__(
            f"outcome probability {probability:.3e} is at or below the "
            f"zero-branch threshold {threshold:.1e}"
        )
        self.probability = probability
        self.threshold = threshold


class UndefinedConditionalError(NumericError):
    code = "undefined-conditional"


class NoConvergenceError(NumericError):
    code = "no-convergence"
