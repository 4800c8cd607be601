"""Exception types shared across the package."""


class KwcError(Exception):
    """Base class for all package-specific errors."""


class GridMismatchError(KwcError):
    """Two fields living on incompatible discretizations were combined."""


class ModelValidationError(KwcError):
    """A material-function or parameter record violates its contract."""


class ConfigError(KwcError):
    """A run configuration file is missing, malformed, or out of range."""


class ConstraintError(KwcError):
    """An obstacle pair is empty or a control is infeasible."""


class SolverError(KwcError):
    """A linear solve failed to converge.

    Carries the time-step index and the final relative residual so a failed
    run can be diagnosed from the error record alone.
    """

    def __init__(self, message: str, step: int | None = None, residual: float | None = None):
        super().__init__(message)
        self.step = step
        self.residual = residual


class LineSearchError(KwcError):
    """Backtracking failed to find sufficient decrease."""

    def __init__(self, message: str, iterate: int, cost: float, step_size: float):
        super().__init__(message)
        self.iterate = iterate
        self.cost = cost
        self.step_size = step_size
