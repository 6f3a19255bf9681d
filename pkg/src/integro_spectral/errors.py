"""Exception hierarchy shared by the solvers and the command line."""


class SpectralError(Exception):
    """Base class for all errors raised by this package."""


class GridError(SpectralError, ValueError):
    pass


class ProblemError(SpectralError, ValueError):
    pass


class SolverError(SpectralError, ArithmeticError):
    """Raised when a trace grows beyond the representable range."""


class BoundaryZeroError(SpectralError):
    pass


class PhaseResolutionError(SpectralError):
    pass


class CompletenessError(SpectralError):
    pass


class NewtonStagnationError(SpectralError):
    pass


class DegenerateChainError(SpectralError):
    pass


class RelationViolatedError(SpectralError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class CountMismatchError(SpectralError):
    pass


class MultiplicityChangeError(SpectralError):
    pass


class FormatError(SpectralError, ValueError):
    """Malformed CSV or configuration input."""


class ConfigError(SpectralError, ValueError):
    pass
