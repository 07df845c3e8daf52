"""Exception hierarchy shared by every module of the package."""


class MirrorOptError(Exception):
    """Base class for all errors raised by mirroropt."""


class DomainError(MirrorOptError, ValueError):
    """A point lies outside the domain required by an operation."""


class UnsupportedPair(MirrorOptError, ValueError):
    """No closed-form update exists for the requested (mirror map, set) pair."""


class InfeasibleStart(MirrorOptError, ValueError):
    pass


class DimensionMismatch(MirrorOptError, ValueError):
    pass


class NotStochastic(MirrorOptError, ValueError):
    """A transition matrix has negative entries or rows not summing to one."""


class BadLabels(MirrorOptError, ValueError):
    pass


class ParseError(MirrorOptError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MissingOptimum(MirrorOptError, ValueError):
    """A quantity needs a minimizer x_* but none was supplied or known."""


class UnboundedSet(MirrorOptError, ValueError):
    pass


class ZeroGradientAtNonOptimum(MirrorOptError, ArithmeticError):
    """Polyak-type stepsize hit a vanishing gradient while the loss gap is positive."""


class NumericalDivergence(MirrorOptError, ArithmeticError):
    """Iterates became non-finite or exceeded the divergence threshold.

    The partially recorded trajectory (if any) is available as ``trajectory``.
    """

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class IncompleteSpec(MirrorOptError, ValueError):
    """A bound was requested without all constants it depends on."""


class NonPositiveMetric(MirrorOptError, ValueError):
    pass


class ConfigError(MirrorOptError, ValueError):
    pass
