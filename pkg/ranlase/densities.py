"""
Large-N scattering-strength densities rho(sigma) of random media.

A density is integrated on the variable theta with
sigma = sigma_min + (sigma_max - sigma_min) * sin^2(theta), which absorbs the
inverse-square-root and square-root edge behavior of every density here, so
adaptive Gauss-Kronrod converges to near machine precision.

Amplifying densities are obtained from absorbing ones by the reciprocal map
sigma -> 1/sigma (sigma^2 rho_-(sigma) = rho_+(1/sigma)); their integrals are
always evaluated on the absorbing side.
"""

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from ranlase.config import Settings, get_settings
from ranlase.errors import DomainError, InfiniteMomentError, RanlaseWarning, ValidityError

logger = logging.getLogger(__name__)

ArrayFunc = Callable[[np.ndarray], np.ndarray]

# Below this gamma the weak-absorption cavity edges 1 - 3g -+ 2g sqrt(2) stay non-negative
WEAK_CAVITY_MAX_GAMMA = 3.0 - 2.0 * math.sqrt(2.0)


@dataclass(frozen=True)
class StrengthDensity:
    """
    Ensemble-averaged density of scattering strengths.

    `evaluate` is only called on the open support; `__call__` adds the zero
    outside. An amplifying density built by `dual_density` keeps a reference to
    its absorbing partner in `dual_of` and delegates all integrals to it.
    """

    support: Tuple[float, float]
    evaluate: ArrayFunc
    total_weight: float
    edge_exponents: Tuple[float, float]
    provenance: str
    parameters: dict = field(default_factory=dict)
    dual_of: Optional["StrengthDensity"] = None
    notes: Tuple[str, ...] = ()

    @property
    def sigma_min(self) -> float:
        return self.support[0]

    @property
    def sigma_max(self) -> float:
        return self.support[1]

    @property
    def is_amplifying(self) -> bool:
        return self.sigma_min >= 1.0

    @property
    def divergent(self) -> bool:
        """True when the support reaches sigma = inf and all moments (1-sigma)^p diverge."""
        return math.isinf(self.sigma_max)

    def __call__(self, sigma):
        sigma = np.asarray(sigma, dtype=float)
        inside = (sigma > self.sigma_min) & (sigma < self.sigma_max)
        out = np.zeros_like(sigma)
        if np.any(inside):
            out[inside] = self.evaluate(sigma[inside])
        return out if out.ndim else float(out)

    # --- quadrature ---

    def _theta_of(self, sigma: float) -> float:
        lo, hi = self.support
        ratio = min(max((sigma - lo) / (hi - lo), 0.0), 1.0)
        return math.asin(math.sqrt(ratio))

    def _breakpoints(self, theta_lo: float, theta_hi: float) -> Optional[list]:
        # a small positive sigma_min makes g(sigma) = (1 - 1/sigma)^p vary on the scale
        # sigma_min right at the lower edge; split there
        lo, hi = self.support
        if not 0.0 < lo < 0.1 * (hi - lo):
            return None
        points = []
        offset = lo
        while offset < hi - lo:
            theta = self._theta_of(lo + offset)
            if theta_lo < theta < theta_hi:
                points.append(theta)
            offset *= 10.0
        return points or None

    def _mapped(self, g: Callable) -> Callable:
        lo, hi = self.support
        width = hi - lo

        def integrand(theta):
            s = math.sin(theta)
            sigma = lo + width * s * s
            if sigma <= lo or sigma >= hi:
                return 0.0
            jac = width * math.sin(2.0 * theta)
            return float(self.evaluate(np.array([sigma]))[0]) * jac * g(sigma)

        return integrand

    def integrate(self, g: Callable[[float], float] = None, lo: float = None, hi: float = None,
                  settings: Optional[Settings] = None) -> Tuple[float, float]:
        """
        Return (integral of rho(sigma) g(sigma) over [lo, hi] within the support, abs error).
        g defaults to 1.
        """
        if g is None:
            g = _one
        if self.dual_of is not None:
            # [lo, hi] on the amplifying side is [1/hi, 1/lo] on the absorbing side
            lo_p = None if hi is None else (0.0 if math.isinf(hi) else 1.0 / hi)
            hi_p = None if lo is None else (math.inf if lo <= 0.0 else 1.0 / lo)
            return self.dual_of.integrate(lambda s: g(1.0 / s), lo=lo_p, hi=hi_p, settings=settings)
        settings = settings or get_settings()
        theta_lo = 0.0 if lo is None else self._theta_of(lo)
        theta_hi = 0.5 * math.pi if hi is None else self._theta_of(hi)
        if theta_hi <= theta_lo:
            return 0.0, 0.0
        value, error = integrate.quad(
            self._mapped(g), theta_lo, theta_hi,
            epsabs=0.0, epsrel=settings.quad_epsrel, limit=settings.quad_limit,
            points=self._breakpoints(theta_lo, theta_hi),
        )
        return value, error

    def integrate_vec(self, g: Callable[[float], np.ndarray],
                      settings: Optional[Settings] = None) -> np.ndarray:
        """Integral of rho(sigma) g(sigma) for a vector-valued real g, by adaptive quad_vec."""
        if self.dual_of is not None:
            return self.dual_of.integrate_vec(lambda s: g(1.0 / s), settings=settings)
        settings = settings or get_settings()
        lo, hi = self.support
        width = hi - lo

        def integrand(theta):
            s = math.sin(theta)
            sigma = lo + width * s * s
            value = np.asarray(g(sigma), dtype=float)
            if sigma <= lo or sigma >= hi:
                return np.zeros_like(value)
            return float(self.evaluate(np.array([sigma]))[0]) * width * math.sin(2.0 * theta) * value

        value, _ = integrate.quad_vec(
            integrand, 0.0, 0.5 * math.pi, epsabs=0.0, epsrel=settings.quad_epsrel,
            limit=settings.quad_limit, points=self._breakpoints(0.0, 0.5 * math.pi),
        )
        return value

    def mass_between(self, lo: float, hi: float) -> float:
        """Integral of rho over [lo, hi]."""
        return self.integrate(lo=lo, hi=hi)[0]


def _one(sigma: float) -> float:
    return 1.0


def _require_gamma(gamma: float, modes: int) -> None:
    if not isinstance(gamma, (int, float)) or math.isnan(gamma) or gamma <= 0.0 or math.isinf(gamma):
        raise DomainError(f"gamma must be a positive finite number, got {gamma!r}")
    if modes < 1:
        raise DomainError(f"N must be >= 1, got {modes}")


def rho_waveguide_semiinf(modes: int, gamma: float) -> StrengthDensity:
    """Reflection-strength density of an absorbing, infinitely long disordered waveguide."""
    _require_gamma(gamma, modes)
    sigma_max = 1.0 / (1.0 + 0.25 * gamma)
    prefactor = modes * math.sqrt(gamma) / math.pi

    def evaluate(sigma: np.ndarray) -> np.ndarray:
        inner = np.clip(1.0 / sigma - 1.0 - 0.25 * gamma, 0.0, None)
        return prefactor * np.sqrt(inner) / (1.0 - sigma) ** 2

    return StrengthDensity(
        support=(0.0, sigma_max), evaluate=evaluate, total_weight=float(modes),
        edge_exponents=(-0.5, 0.5), provenance="waveguide-semi-infinite",
        parameters={"N": modes, "gamma": gamma},
    )


def cavity_edges_weak(gamma: float) -> Tuple[float, float]:
    """Weak-absorption support edges 1 - 3 gamma -+ 2 gamma sqrt(2)."""
    return 1.0 - 3.0 * gamma - 2.0 * math.sqrt(2.0) * gamma, 1.0 - 3.0 * gamma + 2.0 * math.sqrt(2.0) * gamma


def cavity_edges(gamma: float) -> Tuple[float, float]:
    """Exact large-N support edges (sigma_-, sigma_+) of the absorbing chaotic cavity."""
    numerator = 8.0 + 20.0 * gamma ** 2 - gamma ** 4
    root = gamma * (8.0 + gamma ** 2) ** 1.5
    denominator = 8.0 * (1.0 + gamma) ** 3
    return (numerator - root) / denominator, (numerator + root) / denominator


def rho_cavity_weak(modes: int, gamma: float, settings: Optional[Settings] = None) -> StrengthDensity:
    """Scattering-strength density of a weakly absorbing chaotic cavity."""
    _require_gamma(gamma, modes)
    settings = settings or get_settings()
    if gamma > WEAK_CAVITY_MAX_GAMMA:
        raise ValidityError(
            f"gamma={gamma}: the weak-absorption lower edge 1 - 3 gamma - 2 sqrt(2) gamma = "
            f"{1.0 - (3.0 + 2.0 * math.sqrt(2.0)) * gamma:.6g} is negative, but absorbing strengths lie in [0, 1] "
            f"(requires gamma <= 3 - 2 sqrt(2) = {WEAK_CAVITY_MAX_GAMMA:.6f}); use rho_cavity_full"
        )
    notes = ()
    if gamma > settings.weak_guard:
        message = f"rho_cavity_weak used at gamma={gamma} above its validity guard {settings.weak_guard}"
        logger.warning(message)
        warnings.warn(message, RanlaseWarning, stacklevel=2)
        notes = (message,)

    sigma_lo, sigma_hi = cavity_edges_weak(gamma)
    prefactor = modes / (2.0 * math.pi)

    def evaluate(sigma: np.ndarray) -> np.ndarray:
        width = np.clip((sigma - sigma_lo) * (sigma_hi - sigma), 0.0, None)
        return prefactor * np.sqrt(width) / (1.0 - sigma) ** 2

    return StrengthDensity(
        support=(sigma_lo, sigma_hi), evaluate=evaluate, total_weight=float(modes),
        edge_exponents=(0.5, 0.5), provenance="cavity-weak",
        parameters={"N": modes, "gamma": gamma}, notes=notes,
    )


def rho_cavity_full(modes: int, gamma: float) -> StrengthDensity:
    """Large-N scattering-strength density of an absorbing chaotic cavity for any gamma."""
    _require_gamma(gamma, modes)
    sigma_minus, sigma_plus = cavity_edges(gamma)
    sigma_min = sigma_minus if gamma < 1.0 else 0.0
    prefactor = 6.0 * modes * math.sqrt(3.0) / math.pi
    b_scale = (3.0 + 3.0 * gamma) ** 1.5
    shift = 2.0 - 2.0 * gamma

    def evaluate(sigma: np.ndarray) -> np.ndarray:
        a = (gamma - 1.0) ** 3 + 9.0 * (1.0 + 0.5 * gamma ** 2) * sigma
        radicand = np.clip(sigma * (sigma - sigma_minus) * (sigma_plus - sigma), 0.0, None)
        b = b_scale * np.sqrt(radicand)
        # real cube roots: a - b changes sign inside the support
        u = np.cbrt(a + b)
        v = np.cbrt(a - b)
        diff = u - v
        return prefactor * diff / ((u + v + shift - 6.0 * sigma) ** 2 + 3.0 * diff ** 2)

    lower_exponent = -0.5 if gamma > 1.0 else 0.5
    return StrengthDensity(
        support=(sigma_min, sigma_plus), evaluate=evaluate, total_weight=float(modes),
        edge_exponents=(lower_exponent, 0.5), provenance="cavity-full",
        parameters={"N": modes, "gamma": gamma},
    )


def dual_density(rho_plus: StrengthDensity) -> StrengthDensity:
    """
    Density of the dual medium: sigma^2 rho_-(sigma) = rho_+(1/sigma).

    Applied to an absorbing density it gives the amplifying one; applied to a
    dual it returns the original object. A support touching sigma = 0 maps to
    an unbounded amplifying support whose moments are flagged divergent.
    """
    if rho_plus.dual_of is not None:
        return rho_plus.dual_of
    if rho_plus.sigma_max > 1.0:
        raise DomainError(f"dual_density expects an absorbing density (sigma_max <= 1), got {rho_plus.support}")

    lo, hi = rho_plus.support
    support = (1.0 / hi, math.inf if lo <= 0.0 else 1.0 / lo)
    if math.isinf(support[1]):
        logger.info(f"Dual of {rho_plus.provenance} has unbounded support; spectral moments diverge")

    def evaluate(sigma: np.ndarray) -> np.ndarray:
        sigma = np.asarray(sigma, dtype=float)
        return rho_plus.evaluate(1.0 / sigma) / sigma ** 2

    return StrengthDensity(
        support=support, evaluate=evaluate, total_weight=rho_plus.total_weight,
        edge_exponents=(rho_plus.edge_exponents[1], rho_plus.edge_exponents[0]),
        provenance=f"dual({rho_plus.provenance})",
        parameters=dict(rho_plus.parameters), dual_of=rho_plus, notes=rho_plus.notes,
    )


def spectral_moment(rho: StrengthDensity, p: int, settings: Optional[Settings] = None) -> float:
    """p-th spectral moment m_p = integral of rho(sigma) (1 - sigma)^p."""
    if isinstance(p, bool) or not isinstance(p, int) or p < 1:
        raise DomainError(f"moment order must be an integer >= 1, got {p!r}")
    if rho.divergent:
        raise InfiniteMomentError(p, f"moment p={p} of {rho.provenance} diverges (unbounded amplifying support)")
    value, error = rho.integrate(lambda s: (1.0 - s) ** p, settings=settings)
    if value != 0.0 and abs(error / value) > 1e-8:
        logger.warning(f"Moment p={p} of {rho.provenance}: relative quadrature error {abs(error / value):.2e}")
    return value


def spectral_moments(rho: StrengthDensity, p_max: int, settings: Optional[Settings] = None) -> Sequence[float]:
    """m_1 .. m_{p_max}."""
    return [spectral_moment(rho, p, settings=settings) for p in range(1, p_max + 1)]


def density_for(geometry: str, modes: int, gamma: float, amplifying: bool = False,
                weak: bool = False) -> StrengthDensity:
    """Analytic density for a geometry name; amplifying media go through the duality map."""
    if geometry == "waveguide":
        rho = rho_waveguide_semiinf(modes, gamma)
    elif geometry == "cavity":
        rho = rho_cavity_weak(modes, gamma) if weak else rho_cavity_full(modes, gamma)
    else:
        raise DomainError(f"no large-N strength density is available for geometry {geometry!r}")
    return dual_density(rho) if amplifying else rho
