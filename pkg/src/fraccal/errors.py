"""Exception hierarchy.

Three families map onto the command-line exit codes: configuration and
geometry problems (1), numerical precondition failures (2) and internal
tolerance breaches (3).
"""


class FracCalError(Exception):
    """Base class for every error raised by :mod:`fraccal`."""

    exit_code = 2


class ConfigError(FracCalError, ValueError):
    exit_code = 1


class EndpointNotAligned(ConfigError):
    pass


class RegionsTouch(ConfigError):
    pass


class EmptyRegion(ConfigError):
    pass


class InvalidOrder(ConfigError):
    pass


class PartitionNotAligned(ConfigError):
    pass


class DeltaTooLarge(ConfigError):
    pass


class PreconditionError(FracCalError):
    """A numerical precondition of an operation does not hold."""

    exit_code = 2


class SupportViolation(PreconditionError, ValueError):
    pass


class NearSingular(PreconditionError):
    """Zero is (numerically) a Dirichlet eigenvalue of the Schrödinger operator."""


class IncompatibleData(PreconditionError):
    pass


class GramNotSPD(PreconditionError):
    pass


class GramMismatch(PreconditionError, ValueError):
    pass


class TargetUnreachable(PreconditionError):
    pass


class EmptyTarget(PreconditionError, ValueError):
    pass


class IllConditionedM(PreconditionError):
    pass


class AbsorptionViolated(PreconditionError):
    pass


class InadmissibleControl(PreconditionError):
    pass


class NoConvergence(PreconditionError):
    """Fixed-point iteration stalled; ``result`` carries the partial trace."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class ToleranceBreach(FracCalError):
    exit_code = 3
