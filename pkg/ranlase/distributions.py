"""
Photocount probability mass functions: the closed-form families and the
numerical inversion of a factorial-cumulant generating function.

All closed forms are evaluated in log space and exponentiated once.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from scipy.special import comb, gammaln, xlogy

from ranlase.bessel import log_kv_half_signed
from ranlase.config import Settings, get_settings
from ranlase.errors import DomainError, DomainRadiusError, TruncationError
from ranlase.photostat import GeneratingFunction

logger = logging.getLogger(__name__)

# total negative mass the inversion may clip away
CLIP_MASS_LIMIT = 1e-10


class Family(str, Enum):
    NEGATIVE_BINOMIAL = "negative-binomial"
    POISSON = "poisson"
    BESSEL_K = "bessel-k"
    NUMERIC = "numeric"


@dataclass(frozen=True)
class CountDistribution:
    """P(n) for n = 0 .. n_max, with the mass known to lie beyond n_max."""

    pmf: np.ndarray
    family: Family
    tail_mass: float = 0.0
    clip_mass: float = 0.0
    parameters: dict = field(default_factory=dict)

    @property
    def n_max(self) -> int:
        return len(self.pmf) - 1

    @property
    def counts(self) -> np.ndarray:
        return np.arange(len(self.pmf))

    @property
    def mean(self) -> float:
        return float(np.dot(self.counts, self.pmf))

    @property
    def variance(self) -> float:
        n = self.counts
        mean = self.mean
        return float(np.dot((n - mean) ** 2, self.pmf))


@dataclass(frozen=True)
class MomentSummary:
    mean: float
    variance: float
    factorial_cumulants: Tuple[float, ...]

    @property
    def nu_eff(self) -> float:
        excess = self.variance - self.mean
        return self.mean ** 2 / excess if excess > 0.0 else math.inf


def _require_n_max(n_max: int) -> None:
    if isinstance(n_max, bool) or not isinstance(n_max, int) or n_max < 0:
        raise DomainError(f"n_max must be a non-negative integer, got {n_max!r}")


def _check_tail(pmf: np.ndarray, family: Family, settings: Settings) -> float:
    tail = max(0.0, 1.0 - float(np.sum(pmf)))
    if tail > settings.tail_tol:
        raise TruncationError(
            f"{family.value}: mass {tail:.3e} lies beyond n_max={len(pmf) - 1} "
            f"(tolerance {settings.tail_tol:g}); increase n_max"
        )
    return tail


def pmf_negative_binomial(mean: float, nu: float, n_max: int,
                          settings: Optional[Settings] = None) -> CountDistribution:
    """
    P(n) = Gamma(n + nu) / (n! Gamma(nu)) (n/nu)^n / (1 + n/nu)^(n + nu),
    black-body radiation with nu degrees of freedom.
    """
    _require_n_max(n_max)
    if not mean > 0.0 or not nu > 0.0:
        raise DomainError(f"negative binomial needs mean > 0 and nu > 0, got mean={mean}, nu={nu}")
    settings = settings or get_settings()
    n = np.arange(n_max + 1, dtype=float)
    ratio = mean / nu
    log_p = (gammaln(n + nu) - gammaln(n + 1.0) - gammaln(nu)
             + n * math.log(ratio) - (n + nu) * math.log1p(ratio))
    pmf = np.exp(log_p)
    tail = _check_tail(pmf, Family.NEGATIVE_BINOMIAL, settings)
    return CountDistribution(pmf=pmf, family=Family.NEGATIVE_BINOMIAL, tail_mass=tail,
                             parameters={"mean": mean, "nu": nu})


def pmf_poisson(mean: float, n_max: int, settings: Optional[Settings] = None) -> CountDistribution:
    """P(n) = n^n e^-n / n!."""
    _require_n_max(n_max)
    if not mean >= 0.0:
        raise DomainError(f"Poisson mean must be >= 0, got {mean}")
    settings = settings or get_settings()
    n = np.arange(n_max + 1, dtype=float)
    # xlogy gives 0 * log 0 = 0 so mean = 0 yields p_0 = 1
    pmf = np.exp(xlogy(n, mean) - mean - gammaln(n + 1.0))
    tail = _check_tail(pmf, Family.POISSON, settings)
    return CountDistribution(pmf=pmf, family=Family.POISSON, tail_mass=tail, parameters={"mean": mean})


def pmf_bessel_k(mean: float, kappa: float, alpha_f: float, n_max: int,
                 settings: Optional[Settings] = None) -> CountDistribution:
    """
    Glauber's distribution

        P(n) ~ (1/n!) (n / sqrt(1 + alpha f))^n K_{n-1/2}(kappa sqrt(1 + alpha f)),

    with kappa = t Omega_c / 2 for a single Lorentzian mode or kappa = nu_eff
    for a weakly absorbing waveguide. The family requires n = kappa alpha f / 2.
    The result is normalized numerically; the analytic constant
    e^kappa (2 kappa / pi)^(1/2) (1 + alpha f)^(1/4) only measures the tail.
    """
    _require_n_max(n_max)
    if not alpha_f > -1.0:
        raise DomainError(f"Glauber's distribution needs alpha*f > -1, got {alpha_f}")
    if not kappa > 0.0 or not mean > 0.0:
        raise DomainError(f"Glauber's distribution needs kappa > 0 and mean > 0, got kappa={kappa}, mean={mean}")
    expected = 0.5 * kappa * alpha_f
    if abs(mean - expected) > 1e-9 * max(abs(expected), 1.0):
        raise DomainError(f"mean={mean} is inconsistent with kappa*alpha_f/2={expected}")
    settings = settings or get_settings()

    root = math.sqrt(1.0 + alpha_f)
    n = np.arange(n_max + 1)
    log_k = log_kv_half_signed(n, kappa * root)
    log_p = -gammaln(n + 1.0) + n * math.log(mean / root) + log_k
    log_c = kappa + 0.5 * math.log(2.0 * kappa / math.pi) + 0.25 * math.log1p(alpha_f)
    pmf = np.exp(log_p + log_c)
    tail = _check_tail(pmf, Family.BESSEL_K, settings)
    pmf = pmf / pmf.sum()
    return CountDistribution(pmf=pmf, family=Family.BESSEL_K, tail_mass=tail,
                             parameters={"mean": mean, "kappa": kappa, "alpha_f": alpha_f})


def contour_size(n_max: int) -> int:
    """Smallest power of two >= 4 n_max (and >= 8)."""
    return max(8, 1 << max(4 * n_max - 1, 1).bit_length())


def invert_generating(gf: GeneratingFunction, n_max: int,
                      settings: Optional[Settings] = None) -> CountDistribution:
    """
    Recover P(n) from F(xi) on the contour xi = e^{i theta} - 1:

        P(n) = (1/M) sum_k exp F(e^{i theta_k} - 1) e^{-i n theta_k},  theta_k = 2 pi k / M.

    The sum is a discrete Fourier transform, evaluated with numpy.fft.
    """
    _require_n_max(n_max)
    settings = settings or get_settings()
    if not gf.domain_radius > 0.0:
        raise DomainRadiusError(f"{gf.label}: generating function has zero domain radius")
    size = contour_size(n_max)
    theta = 2.0 * math.pi * np.arange(size) / size
    xi = np.expm1(1j * theta)
    values = np.asarray(gf(xi), dtype=complex)
    if not np.all(np.isfinite(values)):
        raise DomainRadiusError(f"{gf.label}: F(xi) is not finite on the unit-circle contour (above threshold?)")

    coefficients = np.fft.fft(np.exp(values)) / size
    pmf = coefficients.real[:n_max + 1].copy()

    negative = pmf < 0.0
    clip_mass = float(-pmf[negative].sum())
    if np.any(pmf < -settings.neg_floor) or clip_mass > CLIP_MASS_LIMIT:
        raise TruncationError(
            f"{gf.label}: inversion produced negative probabilities (clip mass {clip_mass:.3e}); "
            f"increase n_max to reduce aliasing"
        )
    pmf[negative] = 0.0
    tail = _check_tail(pmf, Family.NUMERIC, settings)
    logger.debug(f"Inverted {gf.label} on M={size} points: tail={tail:.2e}, clip={clip_mass:.2e}")
    return CountDistribution(pmf=pmf, family=Family.NUMERIC, tail_mass=tail, clip_mass=clip_mass,
                             parameters={"label": gf.label, "contour_points": size})


def moments_from_pmf(dist: CountDistribution, p_max: int = 4) -> MomentSummary:
    """
    Mean, variance and factorial cumulants kappa_1 .. kappa_p_max of a stored pmf.

    Factorial moments mu_p = sum n(n-1)...(n-p+1) P(n) are converted with
    kappa_p = mu_p - sum_{j<p} C(p-1, j-1) kappa_j mu_{p-j}.
    """
    if p_max < 1:
        raise DomainError(f"p_max must be >= 1, got {p_max}")
    n = dist.counts.astype(float)
    pmf = dist.pmf
    falling = np.ones_like(n)
    mu = [1.0]
    for p in range(1, p_max + 1):
        falling = falling * (n - (p - 1))
        mu.append(float(np.dot(falling, pmf)))

    kappa = [0.0]
    for p in range(1, p_max + 1):
        value = mu[p] - sum(comb(p - 1, j - 1, exact=True) * kappa[j] * mu[p - j] for j in range(1, p))
        kappa.append(value)
    return MomentSummary(mean=dist.mean, variance=dist.variance, factorial_cumulants=tuple(kappa[1:]))


def total_variation(first: CountDistribution, second: CountDistribution) -> float:
    """Half the l1 distance between two pmfs on their common range."""
    size = min(len(first.pmf), len(second.pmf))
    return 0.5 * float(np.abs(first.pmf[:size] - second.pmf[:size]).sum())
