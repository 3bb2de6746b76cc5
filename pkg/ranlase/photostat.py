"""
Photodetection statistics of the radiation emitted by a random medium.

Everything here is a pure function of a MediumSpec / StrengthDensity and a
DetectionConfig: generating functions F(xi) of the factorial cumulants, the
cumulants themselves, and the closed-form mean, variance and effective number
of degrees of freedom nu_eff = n^2 / (Var n - n) for each geometry.
"""

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate

from ranlase.config import Settings, get_settings
from ranlase.densities import StrengthDensity, spectral_moments
from ranlase.errors import (
    DomainError,
    DomainRadiusError,
    RanlaseWarning,
    ThresholdError,
    UnsupportedModelError,
)
from ranlase.medium import (
    CAVITY_THRESHOLD,
    BroadLorentzian,
    Coverage,
    DetectionConfig,
    Geometry,
    MediumSpec,
    StepBand,
    gamma_critical,
    thouless_number,
)

logger = logging.getLogger(__name__)

LONG_TIME = "long-time"
SHORT_TIME = "short-time"
NARROW_BAND = "narrow-band"
BROAD_BAND = "broad-band"
SINGLE_MODE = "single-mode"

# relative disagreement tolerated between n^2/(Var n - n) and a closed-form nu_eff/nu
_NU_EFF_CROSS_CHECK = 1e-8


# --- Result records ---

@dataclass(frozen=True)
class StatSummary:
    """Mean, variance and degrees of freedom of a photocount distribution."""

    mean: float
    variance: float
    nu: float
    nu_eff: float
    cumulants: Tuple[float, ...]
    regime: Tuple[str, ...]
    label: str
    extra: dict = field(default_factory=dict)

    @property
    def excess(self) -> float:
        """Var n - n, the second factorial cumulant."""
        return self.variance - self.mean

    @property
    def nu_ratio(self) -> float:
        return self.nu_eff / self.nu if self.nu else math.nan


@dataclass(frozen=True)
class GeneratingFunction:
    """
    F(xi) = ln sum_n (1 + xi)^n P(n), the generating function of the factorial
    cumulants. `evaluate` accepts scalars or arrays, real or complex.
    """

    evaluate: Callable
    domain_radius: float
    regime: Tuple[str, ...]
    label: str

    def __call__(self, xi):
        return self.evaluate(xi)


def _summary(mean: float, excess: float, nu: float, regime: Tuple[str, ...], label: str,
             closed_ratio: Optional[float] = None, cumulants: Optional[Sequence[float]] = None,
             extra: Optional[dict] = None) -> StatSummary:
    extra = dict(extra or {})
    if excess > 0.0:
        nu_eff = mean * mean / excess
        if closed_ratio is not None and nu > 0.0:
            extra["nu_eff_closed"] = closed_ratio * nu
            deviation = abs(nu_eff - closed_ratio * nu) / max(abs(nu_eff), 1e-300)
            if deviation > _NU_EFF_CROSS_CHECK:
                logger.error(f"{label}: nu_eff={nu_eff:.12g} disagrees with closed form "
                             f"{closed_ratio * nu:.12g} (rel {deviation:.2e})")
    elif closed_ratio is not None:
        # gamma = 0: both cumulants vanish, only the limit is meaningful
        nu_eff = closed_ratio * nu
    else:
        nu_eff = math.nan
    return StatSummary(
        mean=mean, variance=mean + excess, nu=nu, nu_eff=nu_eff,
        cumulants=tuple(cumulants) if cumulants is not None else (mean, excess),
        regime=regime, label=label, extra=extra,
    )


# --- Small helpers for array-valued xi ---

def _prepare(xi) -> Tuple[np.ndarray, bool]:
    arr = np.asarray(xi)
    if not np.issubdtype(arr.dtype, np.number):
        raise DomainError(f"xi must be numeric, got {xi!r}")
    return np.atleast_1d(arr).ravel(), arr.ndim == 0


def _shape_back(values: np.ndarray, xi, scalar: bool):
    if scalar:
        value = values[0]
        return complex(value) if np.iscomplexobj(values) else float(value)
    return values.reshape(np.shape(xi))


def _check_log_domain(xi: np.ndarray, coefficients: Sequence[float], label: str) -> None:
    """Raise when 1 - c*xi <= 0 for a real xi and any coefficient c."""
    real_mask = np.imag(xi) == 0.0 if np.iscomplexobj(xi) else np.ones(xi.shape, dtype=bool)
    if not np.any(real_mask):
        return
    real_xi = np.real(xi[real_mask])
    for c in coefficients:
        if c != 0.0 and np.any(1.0 - c * real_xi <= 0.0):
            bad = real_xi[1.0 - c * real_xi <= 0.0][0]
            raise DomainRadiusError(
                f"{label}: log argument 1 - {c:.6g}*xi is not positive at xi={bad:.6g} "
                f"(domain radius {1.0 / abs(c):.6g})"
            )


def _radius(coefficients: Sequence[float]) -> float:
    largest = max((abs(c) for c in coefficients), default=0.0)
    return math.inf if largest == 0.0 else 1.0 / largest


def _log_sum_generating(coefficients: Sequence[float], weight: float, regime: Tuple[str, ...],
                        label: str) -> GeneratingFunction:
    """F(xi) = -weight * sum_n ln(1 - c_n xi)."""
    coeffs = np.asarray(coefficients, dtype=float)

    def evaluate(xi):
        flat, scalar = _prepare(xi)
        _check_log_domain(flat, coeffs, label)
        if np.iscomplexobj(flat):
            logs = np.log(1.0 - np.outer(coeffs, flat))
        else:
            logs = np.log1p(-np.outer(coeffs, flat.astype(float)))
        return _shape_back(-weight * logs.sum(axis=0), xi, scalar)

    return GeneratingFunction(evaluate=evaluate, domain_radius=_radius(coeffs),
                              regime=regime, label=label)


# --- Closed-form generating functions ---

def negative_binomial_generating(nu: float, alpha_f: float) -> GeneratingFunction:
    """Black-body generating function -nu ln(1 - xi alpha f)."""
    if not nu > 0.0:
        raise DomainError(f"nu must be positive, got {nu}")
    return _log_sum_generating([alpha_f], nu, (LONG_TIME,), "negative-binomial")


def poisson_generating(mean: float) -> GeneratingFunction:
    """F(xi) = n xi (coherent radiation or nu -> infinity)."""
    if mean < 0.0:
        raise DomainError(f"mean must be >= 0, got {mean}")

    def evaluate(xi):
        flat, scalar = _prepare(xi)
        return _shape_back(mean * flat, xi, scalar)

    return GeneratingFunction(evaluate=evaluate, domain_radius=math.inf, regime=(), label="poisson")


def glauber_generating(kappa: float, alpha_f: float) -> GeneratingFunction:
    """
    F(xi) = kappa (1 - sqrt(1 - xi alpha f)).

    kappa is t*Omega_c/2 for a single Lorentzian mode, or nu_eff for the
    weakly absorbing waveguide; the mean count is kappa * alpha f / 2.
    """
    if not kappa > 0.0:
        raise DomainError(f"kappa must be positive, got {kappa}")
    if not alpha_f > -1.0:
        raise DomainError(f"alpha*f must exceed -1, got {alpha_f}")

    def evaluate(xi):
        flat, scalar = _prepare(xi)
        _check_log_domain(flat, [alpha_f], "glauber")
        if np.iscomplexobj(flat):
            values = kappa * (1.0 - np.sqrt(1.0 - alpha_f * flat))
        else:
            values = kappa * (1.0 - np.sqrt(1.0 - alpha_f * flat.astype(float)))
        return _shape_back(values, xi, scalar)

    return GeneratingFunction(evaluate=evaluate, domain_radius=_radius([alpha_f]),
                              regime=(LONG_TIME,), label="glauber")


# --- Long-time narrow-band statistics from a strength density ---

def generating_long_time(rho: StrengthDensity, cfg: DetectionConfig,
                         settings: Optional[Settings] = None) -> GeneratingFunction:
    """
    Long-time, narrow-band generating function

        F(xi) = -(nu/N) integral rho(sigma) ln[1 - (1 - sigma) xi alpha f] d sigma.

    An amplifying density is used with f < 0 directly.
    """
    settings = settings or get_settings()
    cfg.require_long_time(settings)
    if rho.divergent:
        raise DomainRadiusError(
            f"{rho.provenance} has unbounded support: F(xi) is not finite for any xi != 0 "
            f"(medium at or above the laser threshold)"
        )
    modes = rho.total_weight
    nu = cfg.nu(modes)
    alpha_f = cfg.alpha_f
    # c(sigma) = (1 - sigma) alpha f is linear, so its extremes sit on the support edges
    edge_coeffs = [(1.0 - rho.sigma_min) * alpha_f, (1.0 - rho.sigma_max) * alpha_f]
    label = f"long-time[{rho.provenance}]"
    scale = -nu / modes

    def evaluate(xi):
        flat, scalar = _prepare(xi)
        _check_log_domain(flat, edge_coeffs, label)
        if np.iscomplexobj(flat):
            size = flat.size

            def g(sigma):
                logs = np.log(1.0 - (1.0 - sigma) * alpha_f * flat)
                return np.concatenate([logs.real, logs.imag])

            parts = rho.integrate_vec(g, settings=settings)
            values = scale * (parts[:size] + 1j * parts[size:])
        else:
            real_xi = flat.astype(float)
            values = scale * rho.integrate_vec(
                lambda sigma: np.log1p(-(1.0 - sigma) * alpha_f * real_xi), settings=settings
            )
        return _shape_back(values, xi, scalar)

    return GeneratingFunction(evaluate=evaluate, domain_radius=_radius(edge_coeffs),
                              regime=(LONG_TIME, NARROW_BAND), label=label)


def factorial_cumulants(rho: StrengthDensity, cfg: DetectionConfig, p_max: int = 4,
                        settings: Optional[Settings] = None) -> Tuple[float, ...]:
    """kappa_p = (p-1)! nu (alpha f)^p m_p / N for p = 1 .. p_max."""
    settings = settings or get_settings()
    cfg.require_long_time(settings)
    modes = rho.total_weight
    nu = cfg.nu(modes)
    moments = spectral_moments(rho, p_max, settings=settings)
    return tuple(
        math.factorial(p - 1) * nu * cfg.alpha_f ** p * m / modes
        for p, m in enumerate(moments, start=1)
    )


def stats_from_density(rho: StrengthDensity, cfg: DetectionConfig, p_max: int = 4,
                       settings: Optional[Settings] = None) -> StatSummary:
    """StatSummary built from the spectral moments of a density."""
    if p_max < 2:
        raise DomainError(f"p_max must be >= 2, got {p_max}")
    cumulants = factorial_cumulants(rho, cfg, p_max, settings)
    return _summary(cumulants[0], cumulants[1], cfg.nu(rho.total_weight), (LONG_TIME, NARROW_BAND),
                    f"moments[{rho.provenance}]", cumulants=cumulants)


# --- Closed forms: spectral moments per mode as functions of gamma ---

def cavity_moments(gamma: float, amplifying: bool = False) -> Tuple[float, float]:
    """
    (m_1/N, m_2/N) of the chaotic cavity; the amplifying cavity follows from
    gamma -> -gamma.
    """
    g = -gamma if amplifying else gamma
    return g / (1.0 + g), g * g * (g * g + 2.0 * g + 2.0) / (1.0 + g) ** 4


def cavity_nu_ratio(gamma: float, amplifying: bool = False) -> float:
    """nu_eff/nu = (1 +- gamma)^2 / (gamma^2 +- 2 gamma + 2)."""
    g = -gamma if amplifying else gamma
    return (1.0 + g) ** 2 / (g * g + 2.0 * g + 2.0)


def waveguide_moments(gamma: float) -> Tuple[float, float]:
    """
    (m_1/N, m_2/N) of the absorbing semi-infinite waveguide:
    m_1/N = (gamma/2)(sqrt(1 + 4/gamma) - 1), m_2/N = (1 + 4/gamma)^(-1/2).
    """
    if gamma == 0.0:
        return 0.0, 0.0
    root = math.sqrt(1.0 + 4.0 / gamma)
    return 2.0 / (root + 1.0), math.sqrt(gamma / (gamma + 4.0))


def waveguide_nu_ratio(gamma: float) -> float:
    """nu_eff/nu = 4 [(1 + 4/gamma)^(1/4) + (1 + 4/gamma)^(-1/4)]^(-2)."""
    if gamma == 0.0:
        return 0.0
    q = (1.0 + 4.0 / gamma) ** 0.25
    return 4.0 / (q + 1.0 / q) ** 2


# D(s) = sum_{k>=3} c_k s^(2k+1); the terms k <= 2 cancel exactly
def _d_coefficient(k: int) -> float:
    even = -(1.0 + 2.0 ** (2 * k - 1)) / math.factorial(2 * k)
    odd = (-1.25 - 0.25 * 2.0 ** (2 * k + 1) + 0.75 * 3.0 ** (2 * k + 1)
           - 0.125 * 4.0 ** (2 * k + 1)) / math.factorial(2 * k + 1)
    return (-1) ** k * (even + odd)


_D_COEFFS = np.array([_d_coefficient(k) for k in range(3, 31)])
_D_SIGNS = np.array([(-1.0) ** k for k in range(3, 31)])
_SERIES_MAX = 1.0


def _series(coeffs: np.ndarray, s: float) -> float:
    return s ** 7 * float(np.polynomial.polynomial.polyval(s * s, coeffs))


def d_function(s: float) -> float:
    """3s/2 - s cos s - s cos 2s/2 - 5 sin s/4 - sin 2s/4 + 3 sin 3s/4 - sin 4s/8."""
    if abs(s) <= _SERIES_MAX:
        return _series(_D_COEFFS, s)
    return (1.5 * s - s * math.cos(s) - 0.5 * s * math.cos(2 * s) - 1.25 * math.sin(s)
            - 0.25 * math.sin(2 * s) + 0.75 * math.sin(3 * s) - 0.125 * math.sin(4 * s))


def d_function_hyperbolic(s: float) -> float:
    """Hyperbolic counterpart of d_function (cos -> cosh, sin -> sinh); negative for s > 0."""
    if abs(s) <= _SERIES_MAX:
        return _series(_D_COEFFS * _D_SIGNS, s)
    return _d_hyperbolic_scaled(s) * math.exp(4.0 * s)


def _d_hyperbolic_scaled(s: float) -> float:
    """d_function_hyperbolic(s) * exp(-4s), finite for large s."""
    e = [math.exp(-j * s) for j in range(9)]
    return (1.5 * s * e[4]
            - 0.5 * s * (e[3] + e[5])
            - 0.25 * s * (e[2] + e[6])
            - 0.625 * (e[3] - e[5])
            - 0.125 * (e[2] - e[6])
            + 0.375 * (e[1] - e[7])
            - 0.0625 * (1.0 - e[8]))


def finite_waveguide_moments(gamma: float, gamma_c: float,
                             amplifying: bool = True) -> Tuple[float, float, float]:
    """
    Finite waveguide of length L, detected at one end, with s = pi sqrt(gamma/gamma_c).

    Returns (n/(nu alpha f), (Var n - n)/(nu (alpha f)^2), nu_eff/nu). The
    amplifying forms contain tan(s/2) and D(s)/sin^4 s; the absorbing ones
    follow from gamma -> -gamma.
    """
    root_c = math.sqrt(gamma_c)
    s = math.pi * math.sqrt(gamma / gamma_c)
    if s == 0.0:
        return 0.0, 0.0, 15.0 * root_c / (4.0 * math.pi)
    root_g = s * root_c / math.pi
    if amplifying:
        half_tan = math.tan(0.5 * s)
        sin4 = math.sin(s) ** 4
        d = d_function(s)
        m1 = -root_g * half_tan
        m2 = root_g * d / (2.0 * sin4)
        # (1 - cos s) = 2 sin^2(s/2) keeps small s accurate
        one_minus_cos = 2.0 * math.sin(0.5 * s) ** 2
        ratio = 2.0 * root_g * one_minus_cos ** 2 * math.sin(s) ** 2 / d
    else:
        half_tanh = math.tanh(0.5 * s)
        if s <= _SERIES_MAX:
            excess_factor = -d_function_hyperbolic(s) / (2.0 * math.sinh(s) ** 4)
        else:
            sinh4_scaled = (0.5 * (1.0 - math.exp(-2.0 * s))) ** 4
            excess_factor = -_d_hyperbolic_scaled(s) / (2.0 * sinh4_scaled)
        m1 = root_g * half_tanh
        m2 = root_g * excess_factor
        ratio = root_g * half_tanh ** 2 / excess_factor
    return m1, m2, ratio


def _warn(message: str) -> None:
    logger.warning(message)
    warnings.warn(message, RanlaseWarning, stacklevel=3)


def closed_form_narrowband(spec: MediumSpec, cfg: DetectionConfig,
                           settings: Optional[Settings] = None) -> StatSummary:
    """
    Closed-form long-time, narrow-band statistics for the geometry and response
    of `spec`. Amplifying media must be below threshold.
    """
    settings = settings or get_settings()
    cfg.require_long_time(settings)
    spec.check_threshold(settings)
    nu = cfg.nu(spec.modes)
    alpha_f = cfg.alpha_f
    gamma = spec.gamma
    response = spec.response.value

    if spec.geometry is Geometry.CAVITY_HOLE:
        m1, m2 = cavity_moments(gamma, spec.is_amplifying)
        ratio = cavity_nu_ratio(gamma, spec.is_amplifying)
        label = f"cavity-{response}"
    elif spec.geometry is Geometry.WAVEGUIDE_SEMI_INFINITE:
        if spec.is_amplifying:
            raise ThresholdError(gamma, 0.0, "an infinitely long amplifying waveguide is above threshold for any gamma > 0")
        m1, m2 = waveguide_moments(gamma)
        ratio = waveguide_nu_ratio(gamma)
        label = "waveguide-absorbing"
    else:
        gamma_c = spec.threshold()
        if gamma_c > settings.weak_guard or gamma > settings.weak_guard:
            _warn(f"finite-waveguide closed forms need gamma, gamma_c << 1; "
                  f"got gamma={gamma:.4g}, gamma_c={gamma_c:.4g} (guard {settings.weak_guard:g})")
        m1, m2, ratio = finite_waveguide_moments(gamma, gamma_c, spec.is_amplifying)
        label = f"finite-waveguide-{response}"

    mean = nu * alpha_f * m1
    excess = nu * alpha_f * alpha_f * m2
    logger.debug(f"{label}: gamma={gamma:.6g} mean={mean:.6g} excess={excess:.6g}")
    return _summary(mean, excess, nu, (LONG_TIME, NARROW_BAND), label, closed_ratio=ratio)


# --- Broad-band detection with a Lorentzian rate profile ---

def _lorentzian_cavity_integral(moment: Callable[[float], float], gamma0: float,
                                settings: Settings) -> float:
    """
    integral over x of m(gamma0/(1 + x^2)), with x = tan(phi) so the infinite
    line maps to (0, pi/2) and m(gamma)/cos^2(phi) stays bounded.
    """
    def integrand(phi):
        c2 = math.cos(phi) ** 2
        return moment(gamma0 * c2) / c2 if c2 > 0.0 else 0.0

    value, _ = integrate.quad(integrand, 0.0, 0.5 * math.pi, epsabs=0.0,
                              epsrel=settings.quad_epsrel, limit=settings.quad_limit)
    return 2.0 * value


def _lorentzian_waveguide_integral(moment: Callable[[float], float], gamma0: float, cutoff: float,
                                   settings: Settings) -> float:
    """integral over |x| <= cutoff of m(gamma0/(1 + x^2)), with x = sinh(u)."""
    def integrand(u):
        ch = math.cosh(u)
        return moment(gamma0 / (ch * ch)) * ch

    value, _ = integrate.quad(integrand, 0.0, math.asinh(cutoff), epsabs=0.0,
                              epsrel=settings.quad_epsrel, limit=settings.quad_limit)
    return 2.0 * value


def broadband_quadrature(spec: MediumSpec, cfg: DetectionConfig,
                         settings: Optional[Settings] = None) -> Tuple[float, float]:
    """
    (n, Var n - n) from the frequency integrals of the narrow-band moments,
    with gamma(omega) = gamma0 / [1 + 4 (omega - omega0)^2 / Gamma^2].
    The waveguide integral is cut at |omega - omega0| <= Gamma (L/l) sqrt(gamma0).
    """
    settings = settings or get_settings()
    band = _lorentzian_band(cfg)
    gamma0 = band.gamma0
    nu = cfg.nu(spec.modes)
    if spec.geometry is Geometry.CAVITY_HOLE:
        amplifying = spec.is_amplifying
        first = _lorentzian_cavity_integral(lambda g: cavity_moments(g, amplifying)[0], gamma0, settings)
        second = _lorentzian_cavity_integral(lambda g: cavity_moments(g, amplifying)[1], gamma0, settings)
    else:
        cutoff = 2.0 * _require_length(spec) * math.sqrt(gamma0)
        first = _lorentzian_waveguide_integral(lambda g: waveguide_moments(g)[0], gamma0, cutoff, settings)
        second = _lorentzian_waveguide_integral(lambda g: waveguide_moments(g)[1], gamma0, cutoff, settings)
    # d omega / 2 pi = (Gamma / 4 pi) dx and nu = N t Gamma
    scale = nu / (4.0 * math.pi)
    return scale * cfg.alpha_f * first, scale * cfg.alpha_f ** 2 * second


def _lorentzian_band(cfg: DetectionConfig) -> BroadLorentzian:
    if not isinstance(cfg.band, BroadLorentzian):
        raise DomainError(f"broad-band statistics need a Lorentzian band, got {cfg.band.kind}")
    return cfg.band


def _require_length(spec: MediumSpec) -> float:
    if spec.length_ratio is None:
        raise DomainError("broad-band waveguide statistics need length_ratio = L/l for the frequency cutoff")
    return spec.length_ratio


def broadband_stats(spec: MediumSpec, cfg: DetectionConfig, c1: float = 0.0,
                    settings: Optional[Settings] = None) -> StatSummary:
    """
    Long-time statistics for a Lorentzian frequency dependence of the rate.

    The cavity result is the closed form (the quadrature is kept in `extra`);
    for the waveguide the cutoff quadrature is authoritative and the
    leading-log values, with O(1) constant c1, are kept in `extra`.
    """
    settings = settings or get_settings()
    band = _lorentzian_band(cfg)
    gamma0 = band.gamma0
    product = band.width * cfg.count_time
    if product < settings.long_time_min:
        raise DomainError(f"Gamma*t={product:.4g} is below the long-time guard {settings.long_time_min:g}")
    nu = cfg.nu(spec.modes)
    alpha_f = cfg.alpha_f
    quad_mean, quad_excess = None, None

    if spec.geometry is Geometry.CAVITY_HOLE:
        if spec.is_amplifying and gamma0 > CAVITY_THRESHOLD - settings.threshold_margin:
            raise ThresholdError(gamma0, CAVITY_THRESHOLD)
        g = -gamma0 if spec.is_amplifying else gamma0
        root = math.sqrt(1.0 + g)
        mean = nu * alpha_f * g / (4.0 * root)
        excess = nu * alpha_f ** 2 * g * g * (9.0 * g * g + 20.0 * g + 16.0) / (64.0 * root ** 7)
        ratio = 4.0 * root ** 5 / (9.0 * g * g + 20.0 * g + 16.0)
        quad_mean, quad_excess = broadband_quadrature(spec, cfg, settings)
        for name, closed, numeric in (("mean", mean, quad_mean), ("excess", excess, quad_excess)):
            if closed and abs(numeric - closed) > 1e-6 * abs(closed):
                logger.warning(f"broad-band cavity {name}: quadrature {numeric:.10g} vs closed form {closed:.10g}")
        label = f"broadband-cavity-{spec.response.value}"
        extra = {"quadrature_mean": quad_mean, "quadrature_excess": quad_excess,
                 "omega_c": band.omega_c}
        return _summary(mean, excess, nu, (LONG_TIME, BROAD_BAND), label, closed_ratio=ratio, extra=extra)

    if spec.is_amplifying:
        raise UnsupportedModelError("broad-band statistics of an amplifying waveguide are not available")
    length_ratio = _require_length(spec)
    log_factor = math.log(length_ratio * math.sqrt(gamma0)) + c1
    if not 1.0 / length_ratio ** 2 < gamma0 < 1.0:
        _warn(f"leading-log broad-band waveguide forms need (l/L)^2 << gamma0 << 1; "
              f"got gamma0={gamma0:.4g}, L/l={length_ratio:.4g}")
    root0 = math.sqrt(gamma0)
    extra = {
        "leading_log_mean": nu / (2.0 * math.pi) * alpha_f * root0 * log_factor,
        "leading_log_excess": nu / (2.0 * math.pi) * alpha_f ** 2 * 0.5 * root0 * log_factor,
        "leading_log_nu_ratio": root0 * log_factor / math.pi,
        "c1": c1,
        "cutoff": 2.0 * length_ratio * root0,
    }
    quad_mean, quad_excess = broadband_quadrature(spec, cfg, settings)
    return _summary(quad_mean, quad_excess, nu, (LONG_TIME, BROAD_BAND),
                    "broadband-waveguide-absorbing", extra=extra)


# --- Short-time regime ---

@dataclass(frozen=True)
class FactorizedModel:
    """
    Band model with 1 - S(omega) S(omega)^dagger = phi(omega) K for a fixed
    Hermitian matrix K. `omega_tilde` is the integral of phi; `omega_c` is the
    frequency scale checked against the short-time guard.
    """

    kernel: np.ndarray
    omega_tilde: float
    omega_c: float
    label: str = "factorized"

    @classmethod
    def step(cls, modes: int, omega_c: float) -> "FactorizedModel":
        """Black body behind a band-pass filter of width omega_c."""
        return cls(kernel=np.eye(modes), omega_tilde=omega_c, omega_c=omega_c, label="step")

    @classmethod
    def from_matrix(cls, kernel, omega_tilde: float, omega_c: Optional[float] = None) -> "FactorizedModel":
        kernel = np.atleast_2d(np.asarray(kernel))
        if kernel.shape[0] != kernel.shape[1]:
            raise DomainError(f"K must be square, got shape {kernel.shape}")
        if not np.allclose(kernel, kernel.conj().T, atol=1e-10):
            raise DomainError("K must be Hermitian")
        return cls(kernel=kernel, omega_tilde=omega_tilde,
                   omega_c=omega_tilde if omega_c is None else omega_c)

    def absorptivities(self, coverage: Coverage = Coverage.ALL_MODES) -> np.ndarray:
        """Eigenvalues of K (all modes) or its (1, 1) element (single mode)."""
        if coverage is Coverage.SINGLE_MODE:
            return np.array([float(np.real(self.kernel[0, 0]))])
        return np.linalg.eigvalsh(self.kernel)


def short_time_generating(model, cfg: DetectionConfig,
                          settings: Optional[Settings] = None) -> GeneratingFunction:
    """
    F(xi) = -sum_n ln[1 - (t omega_tilde / 2 pi) k_n xi alpha f] for counting
    times short compared with 1/omega_c, where k_n are the eigenvalues of K.
    """
    if not isinstance(model, FactorizedModel):
        raise UnsupportedModelError(
            "short-time statistics of a model that does not factorize as phi(omega) K depend on "
            "eigenvectors as well as eigenvalues and are not supported"
        )
    settings = settings or get_settings()
    product = model.omega_c * cfg.count_time
    if product > settings.short_time_max:
        raise DomainError(f"Omega_c*t={product:.4g} exceeds the short-time guard {settings.short_time_max:g}")
    weight = cfg.count_time * model.omega_tilde / (2.0 * math.pi)
    coefficients = weight * model.absorptivities(cfg.coverage) * cfg.alpha_f
    return _log_sum_generating(coefficients, 1.0, (SHORT_TIME,), f"short-time[{model.label}]")


# --- Single-mode detection ---

@dataclass(frozen=True)
class AbsorptivityProfile:
    """omega -> 1 - (S S^dagger)_11 on [lo, hi]; `peak` bounds |profile|."""

    func: Callable[[float], float]
    lo: float = -math.inf
    hi: float = math.inf
    peak: float = 1.0
    label: str = "profile"

    @classmethod
    def lorentzian(cls, omega_c: float, omega0: float = 0.0) -> "AbsorptivityProfile":
        """1 / [1 + 4 (omega - omega0)^2 / omega_c^2]: a single cavity mode."""
        return cls(func=lambda w: 1.0 / (1.0 + 4.0 * ((w - omega0) / omega_c) ** 2),
                   peak=1.0, label="lorentzian")

    @classmethod
    def flat(cls, width: float, omega0: float = 0.0, depth: float = 1.0) -> "AbsorptivityProfile":
        return cls(func=lambda w: depth, lo=omega0 - 0.5 * width, hi=omega0 + 0.5 * width,
                   peak=abs(depth), label="flat")

    @classmethod
    def wrap(cls, func: Callable[[float], float]) -> "AbsorptivityProfile":
        """Wrap a bare callable on the whole line; the peak is estimated on a tan grid."""
        grid = np.tan(np.linspace(-0.5 * math.pi, 0.5 * math.pi, 4003)[1:-1])
        peak = max(abs(float(func(w))) for w in grid)
        return cls(func=func, peak=peak, label="custom")


def single_mode_stats(profile: Union[AbsorptivityProfile, Callable[[float], float]],
                      cfg: DetectionConfig, p_max: int = 4,
                      settings: Optional[Settings] = None) -> Tuple[GeneratingFunction, StatSummary]:
    """
    Detection of a single outgoing mode:
    dn/domega = (t alpha f / 2 pi) profile(omega) and
    F(xi) = -t integral (domega / 2 pi) ln(1 - xi alpha f profile(omega)).
    """
    if not isinstance(profile, AbsorptivityProfile):
        profile = AbsorptivityProfile.wrap(profile)
    settings = settings or get_settings()
    t = cfg.count_time
    alpha_f = cfg.alpha_f
    func, lo, hi = profile.func, profile.lo, profile.hi
    label = f"single-mode[{profile.label}]"

    cumulants = []
    for p in range(1, p_max + 1):
        value, _ = integrate.quad(lambda w: (alpha_f * func(w)) ** p, lo, hi, epsabs=0.0,
                                  epsrel=settings.quad_epsrel, limit=settings.quad_limit)
        cumulants.append(math.factorial(p - 1) * t / (2.0 * math.pi) * value)

    edge = [alpha_f * profile.peak]
    scale = -t / (2.0 * math.pi)

    def evaluate(xi):
        flat, scalar = _prepare(xi)
        _check_log_domain(flat, edge, label)
        if np.iscomplexobj(flat):
            size = flat.size

            def g(w):
                logs = np.log(1.0 - xi_af * func(w))
                return np.concatenate([logs.real, logs.imag])

            xi_af = flat * alpha_f
            parts, _ = integrate.quad_vec(g, lo, hi, epsabs=0.0, epsrel=settings.quad_epsrel,
                                          limit=settings.quad_limit)
            values = scale * (parts[:size] + 1j * parts[size:])
        else:
            xi_af = flat.astype(float) * alpha_f
            values, _ = integrate.quad_vec(lambda w: np.log1p(-xi_af * func(w)), lo, hi, epsabs=0.0,
                                           epsrel=settings.quad_epsrel, limit=settings.quad_limit)
            values = scale * values
        return _shape_back(values, xi, scalar)

    gf = GeneratingFunction(evaluate=evaluate, domain_radius=_radius(edge), regime=(SINGLE_MODE,), label=label)
    mean = cumulants[0]
    nu = mean / alpha_f
    summary = _summary(mean, cumulants[1] if p_max >= 2 else 0.0, nu, (SINGLE_MODE,), label,
                       cumulants=cumulants)
    return gf, summary


# --- Reference models ---

def black_body_stats(modes: int, cfg: DetectionConfig, model: str = "step",
                     settings: Optional[Settings] = None) -> Tuple[GeneratingFunction, StatSummary]:
    """
    Black body behind a filter of width Omega_c (StepBand).

    "step": negative binomial with nu = N t Omega_c / 2 pi in the long-time
    regime and nu = N in the short-time regime.
    "lorentzian": a single mode with a Lorentzian profile (Glauber's
    distribution, n = t Omega_c alpha f / 4).
    """
    settings = settings or get_settings()
    if not isinstance(cfg.band, StepBand):
        raise DomainError(f"black-body models need a step band, got {cfg.band.kind}")
    omega_c = cfg.band.omega_c
    t = cfg.count_time
    alpha_f = cfg.alpha_f
    product = omega_c * t

    if model == "lorentzian":
        kappa = 0.5 * product
        gf = glauber_generating(kappa, alpha_f)
        mean = 0.5 * kappa * alpha_f
        summary = _summary(mean, 0.25 * kappa * alpha_f ** 2, kappa, (SINGLE_MODE,),
                           "black-body-lorentzian", closed_ratio=1.0)
        return gf, summary
    if model != "step":
        raise UnsupportedModelError(f"unknown black-body model {model!r}; expected 'step' or 'lorentzian'")

    count = 1 if cfg.coverage is Coverage.SINGLE_MODE else modes
    if product >= settings.long_time_min:
        nu, regime = count * product / (2.0 * math.pi), (LONG_TIME,)
    elif product <= settings.short_time_max:
        nu, regime = float(count), (SHORT_TIME,)
    else:
        raise DomainError(
            f"Omega_c*t={product:.4g} lies between the short-time guard {settings.short_time_max:g} "
            f"and the long-time guard {settings.long_time_min:g}"
        )
    mean = nu * alpha_f
    if regime == (SHORT_TIME,):
        # only the fraction t Omega_c / 2 pi of each mode's occupation is counted
        mean *= product / (2.0 * math.pi)
        coefficient = alpha_f * product / (2.0 * math.pi)
    else:
        coefficient = alpha_f
    gf = _log_sum_generating([coefficient], nu, regime, "black-body-step")
    summary = _summary(mean, mean * mean / nu, nu, regime, "black-body-step", closed_ratio=1.0)
    return gf, summary


def absorptivity(strengths) -> float:
    """Mean of 1 - sigma over all given scattering strengths."""
    values = np.asarray(strengths, dtype=float)
    if values.size == 0:
        raise DomainError("absorptivity needs at least one scattering strength")
    return float(np.mean(1.0 - values))


# --- Thouless comparison ---

@dataclass(frozen=True)
class ThoulessComparison:
    limit_ratio: float
    thouless_ratio: float
    ratio: float


def thouless_ratio(spec: MediumSpec) -> ThoulessComparison:
    """Compare lim_{gamma -> 0} nu_eff/nu with N_T/N."""
    if spec.geometry is Geometry.CAVITY_HOLE:
        limit = cavity_nu_ratio(0.0)
    elif spec.geometry is Geometry.WAVEGUIDE_FINITE:
        limit = finite_waveguide_moments(0.0, gamma_critical(spec.length_ratio))[2]
    else:
        limit = 0.0
    n_t = thouless_number(spec) / spec.modes
    ratio = limit / n_t if n_t > 0.0 else math.nan
    return ThoulessComparison(limit_ratio=limit, thouless_ratio=n_t, ratio=ratio)


# --- Determinant identity behind the short-time formula ---

def block_determinant_identity(a_blocks: Sequence[np.ndarray],
                               b_blocks: Sequence[np.ndarray]) -> Tuple[complex, complex]:
    """
    Both sides of det(delta_pp' 1 + A_p B_p') = det(1 + sum_q B_q A_q) for
    n x m matrices A_p and m x n matrices B_p.
    """
    if len(a_blocks) != len(b_blocks) or not a_blocks:
        raise DomainError("need the same, non-zero number of A and B blocks")
    a_blocks = [np.atleast_2d(a) for a in a_blocks]
    b_blocks = [np.atleast_2d(b) for b in b_blocks]
    n, m = a_blocks[0].shape
    if any(a.shape != (n, m) for a in a_blocks) or any(b.shape != (m, n) for b in b_blocks):
        raise DomainError(f"every A block must be {n}x{m} and every B block {m}x{n}")
    count = len(a_blocks)
    big = np.eye(count * n, dtype=complex)
    for p, a in enumerate(a_blocks):
        for q, b in enumerate(b_blocks):
            big[p * n:(p + 1) * n, q * n:(q + 1) * n] += a @ b
    small = np.eye(m, dtype=complex) + sum(b @ a for a, b in zip(a_blocks, b_blocks))
    return complex(np.linalg.det(big)), complex(np.linalg.det(small))
