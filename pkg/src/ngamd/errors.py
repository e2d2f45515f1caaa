"""Exception and warning types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the function."""


class FactorizationError(ValueError):
    """A matrix that must be Hermitian positive definite is not (numerically)."""


class DegenerateSecondary(FactorizationError):
    """Secondary data cannot produce a positive definite covariance estimate."""


class SingularGram(ValueError):
    """The whitened Gram matrix A^H R^-1 A is numerically singular."""


class ZeroSnapshot(ValueError):
    """A statistic that normalizes by snapshot energy received a zero vector."""


class NumericalInstability(ArithmeticError):
    """A closed-form probability left [0, 1] by more than rounding slack."""


class BracketError(ValueError):
    """A root-finding target is not attainable inside the search bracket."""


class DegenerateSpectrum(ValueError):
    """A quadratic-form eigenvalue is non-positive where positivity is required."""


class InsufficientTrials(ValueError):
    """Too few Monte Carlo trials for the requested false-alarm level."""


class ConfigError(ValueError):
    """Invalid experiment configuration.

    ``key`` holds the dotted path of the offending entry when known.
    """

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class TruncationWarning(RuntimeWarning):
    """Probability mass beyond a truncated integration range exceeds tolerance."""
