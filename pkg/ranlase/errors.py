"""
Exception hierarchy for ranlase.

Every error carries the CLI exit code it maps to, so the command-line layer can
translate any library failure into the stable exit-code contract:
0 success, 2 domain, 3 I/O, 4 threshold, 5 Monte Carlo failure.
"""

from typing import Optional


class RanlaseError(Exception):
    """Base class for all ranlase errors."""
    exit_code = 1


class DomainError(RanlaseError, ValueError):
    """Input outside the domain of a formula or operation."""
    exit_code = 2


class SingularityError(DomainError):
    """Evaluation at a pole (e.g. the Bose-Einstein function at x = 0)."""


class DomainRadiusError(DomainError):
    """A generating-function argument left the region where it is finite."""


class ValidityError(DomainError):
    """A closed form was requested outside its range of validity."""


class UnsupportedModelError(DomainError):
    """The requested model cannot be evaluated by this operation."""


class InfiniteMomentError(DomainError):
    """A spectral moment of the density diverges."""

    def __init__(self, p: int, message: Optional[str] = None):
        self.p = p
        super().__init__(message or f"spectral moment of order p={p} diverges")


class TruncationError(DomainError):
    """Probability mass beyond n_max exceeds the declared tail tolerance."""


class ThresholdError(DomainError):
    """The medium is at or above the laser threshold."""
    exit_code = 4

    def __init__(self, gamma: float, gamma_c: float, message: Optional[str] = None):
        self.gamma = gamma
        self.gamma_c = gamma_c
        super().__init__(
            message
            or f"gamma={gamma:.6g} is at or above the laser threshold gamma_c={gamma_c:.6g}"
        )


class OutputError(RanlaseError, OSError):
    """Output file could not be written."""
    exit_code = 3


class MonteCarloError(RanlaseError, RuntimeError):
    """Monte Carlo sampling or validation failed."""
    exit_code = 5


class ConditioningError(MonteCarloError):
    """Cascade inverse (1 - r1' r2) is singular or badly conditioned."""


class SingularDualError(MonteCarloError):
    """The absorbing sample has a zero scattering strength and no dual."""


class ConvergenceError(MonteCarloError):
    """The semi-infinite waveguide histogram did not become stationary."""


class SkippedSamplesError(MonteCarloError):
    """Too many samples were skipped because of conditioning failures."""


class SupportMismatchError(MonteCarloError):
    """Empirical samples fall outside the support of the analytic density."""


class RanlaseWarning(UserWarning):
    """Validity guard crossed; result is returned but may be inaccurate."""
