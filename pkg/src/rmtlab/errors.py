"""Exception hierarchy shared by every rmtlab module."""


class RMTError(Exception):
    """Base class for all rmtlab errors."""


class ProfileConstructionError(RMTError):
    """Variance profile normalisation failed to converge."""


class ConstraintViolationError(RMTError):
    """A variance profile violates one of the generalized Wigner assumptions."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class MomentAssumptionError(RMTError):
    """The entry law does not have the required finite (2 + eps)-th moment."""


class ResamplingUnsupportedError(RMTError):
    """Label resampling needs P[|h| < threshold] strictly inside (0, 1)."""


class DegenerateConditioningError(RMTError):
    """Conditioning on an event of probability zero or one."""


class DimensionMismatchError(RMTError):
    pass


class UndefinedThresholdError(RMTError):
    """log log N is undefined (or non-positive) for the requested N."""


class SingularStabilityError(RMTError):
    pass


class ConvergenceError(RMTError):
    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class EmptyDomainError(RMTError):
    """The requested spectral domain contains no points."""


class PreflightError(RMTError):
    """Moment preflight for a large-deviation check failed."""


class ConfigError(RMTError):
    def __init__(self, message, field_errors=None):
        super().__init__(message)
        self.field_errors = list(field_errors or [])


class DegenerateEstimatorError(RMTError):
    """The test-function window covers so much of the spectrum that locality is lost."""


class InsufficientReplicasError(RMTError):
    """Too few replicas to resolve the requested tolerance at the requested confidence."""
