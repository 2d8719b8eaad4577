"""Exception hierarchy shared by every module of the package."""


class BrenierLabError(Exception):
    """Base class for all errors raised by brenierlab."""


class NumericalDomainError(BrenierLabError, ArithmeticError):
    """A quantity left the range where the computation is meaningful."""


class UnderflowError(NumericalDomainError):
    """Total mass fell below the representable range."""


class InvalidPotentialError(BrenierLabError, ValueError):
    pass


class InvalidMatrixError(BrenierLabError, ValueError):
    pass


class DimensionError(BrenierLabError, ValueError):
    pass


class ResourceLimitError(BrenierLabError, ValueError):
    pass


class MonotonicityError(BrenierLabError, ValueError):
    pass


class DegenerateDensityError(BrenierLabError):
    pass


class DegenerateDirectionsError(BrenierLabError):
    pass


class ContractionViolationError(BrenierLabError):
    """A Hessian eigenvalue of the map potential left [-0.1, 1.1]."""


class IllConditionedBasisError(BrenierLabError):
    pass


class HypothesisFailure(BrenierLabError):
    """The measure is outside the near-Gaussian regime being tested."""


class ConvergenceError(BrenierLabError, RuntimeError):
    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class SolverError(BrenierLabError, RuntimeError):
    def __init__(self, message, bounds=None):
        super().__init__(message)
        self.bounds = bounds


class CertificateFailure(BrenierLabError):
    def __init__(self, stage, value, bound):
        super().__init__(f"certificate stage {stage!r}: {value:.6g} exceeds {bound:.6g}")
        self.stage = stage
        self.value = value
        self.bound = bound


class ConfigError(BrenierLabError, ValueError):
    pass


class HypothesisWarning(UserWarning):
    """Emitted when D^2 V >= Id fails at some audit node."""
