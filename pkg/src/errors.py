"""Exception hierarchy shared by every module.

Each class carries the process exit code the CLI reports for it.
"""


class SpectraError(Exception):
    """Base class for all library errors."""

    exit_code = 1

    def to_record(self):
        return {"error": type(self).__name__, "message": str(self), "exit_code": self.exit_code}


class ValidationError(SpectraError):
    """Bad input: malformed config, shape or domain mismatch."""

    exit_code = 2


class ConfigurationError(ValidationError):
    """A run parameter is outside what the numerics can represent."""


class DomainViolationError(ValidationError):
    """A point lies outside the strip an operation is defined on."""


class NumericalError(SpectraError):
    exit_code = 3


class BranchCutError(NumericalError):
    """Matrix spectrum touches the (-inf, 0] cut of the square root."""


class IntegrationError(NumericalError):
    """Transfer-matrix integration failed (step underflow, singular leading term)."""


class NearSingularError(NumericalError):
    """Resolvent requested too close to an eigenvalue."""

    def __init__(self, message, determinant=None):
        super().__init__(message)
        self.determinant = determinant


class EigenSolverError(NumericalError):
    pass


class BudgetExhaustedError(SpectraError):
    """Subdivision depth or retry budget used up."""

    exit_code = 4
