"""
Physical parameter records of the random medium and the detector, plus the
occupation functions and rate conversions every other module consumes.

All frequencies and times are dimensionless relative to a unit chosen by the
caller; the Bose-Einstein argument is the ratio x = hbar*omega / (k_B T) itself.
"""

import logging
import math
import warnings
from enum import Enum
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ranlase.config import Settings, get_settings
from ranlase.errors import (
    DomainError,
    RanlaseWarning,
    SingularityError,
    ThresholdError,
    ValidityError,
)

logger = logging.getLogger(__name__)

# Coefficient of gamma = c * tau_s / tau_a for three- and two-dimensional scattering
WAVEGUIDE_RATE_COEFFICIENTS = {3: 16.0 / 3.0, 2: math.pi ** 2 / 2.0}

CAVITY_THRESHOLD = 1.0
# gamma_c * (L/l)^2 for the disordered waveguide
WAVEGUIDE_THRESHOLD_CONSTANT = (4.0 * math.pi / 3.0) ** 2


class Geometry(str, Enum):
    CAVITY_HOLE = "cavity"
    WAVEGUIDE_SEMI_INFINITE = "waveguide"
    WAVEGUIDE_FINITE = "finite-waveguide"


class Response(str, Enum):
    ABSORBING = "absorbing"
    AMPLIFYING = "amplifying"


class Coverage(str, Enum):
    ALL_MODES = "all"
    SINGLE_MODE = "single"


def _as_domain_error(exc: ValidationError) -> DomainError:
    details = "; ".join(f"{'.'.join(str(p) for p in e['loc'])}: {e['msg']}" for e in exc.errors())
    return DomainError(details or str(exc))


# --- Occupation functions ---

def bose_einstein(x: float) -> float:
    """
    Bose-Einstein occupation 1/(e^x - 1) at x = hbar*omega/(k_B T).

    Negative x is a negative temperature and gives a value below -1, equal to
    -(1 + f(|x|)).
    """
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise DomainError(f"bose_einstein expects a real number, got {x!r}")
    x = float(x)
    if math.isnan(x):
        raise DomainError("bose_einstein is undefined for NaN")
    if x == 0.0:
        raise SingularityError("bose_einstein has a pole at x = 0")
    if x > 700.0:
        return math.exp(-x)
    return 1.0 / math.expm1(x)


def effective_occupation(spec: "MediumSpec", x: float) -> float:
    """
    Signed occupation for the medium: f(x) when absorbing, f(-x) = -1 - f(x)
    when amplifying. x = inf is complete population inversion (f = -1).
    """
    if isinstance(x, bool) or not isinstance(x, (int, float)) or math.isnan(x):
        raise DomainError(f"effective_occupation expects a real x, got {x!r}")
    if x <= 0.0:
        raise DomainError(f"effective_occupation requires x > 0, got {x}")
    f = 0.0 if math.isinf(x) else bose_einstein(x)
    if spec.response is Response.AMPLIFYING:
        return -1.0 - f
    return f


# --- Rate conversions ---

def _require_positive(**values: Optional[float]) -> None:
    for name, value in values.items():
        if value is None or math.isnan(value) or value <= 0.0:
            raise DomainError(f"{name} must be positive, got {value!r}")


def gamma_waveguide(tau_s: float, tau_a: float, dimension: int = 3) -> float:
    """Normalized absorption rate of the disordered waveguide, gamma = c * tau_s / tau_a."""
    _require_positive(tau_s=tau_s, tau_a=tau_a)
    if dimension not in WAVEGUIDE_RATE_COEFFICIENTS:
        raise DomainError(f"scattering dimension must be 2 or 3, got {dimension}")
    return WAVEGUIDE_RATE_COEFFICIENTS[dimension] * tau_s / tau_a


def dwell_time(modes: float, delta_omega: float) -> float:
    """Mean dwell time 2*pi/(N * delta_omega) of a photon in a lossless cavity."""
    _require_positive(modes=modes, delta_omega=delta_omega)
    return 2.0 * math.pi / (modes * delta_omega)


def gamma_cavity(tau_dwell: float, tau_a: float) -> float:
    """Normalized absorption rate of the chaotic cavity, tau_dwell / tau_a."""
    _require_positive(tau_dwell=tau_dwell, tau_a=tau_a)
    return tau_dwell / tau_a


def absorption_time(omega0: float, eps_imag: float) -> float:
    """Absorption (or amplification) time from 1/tau_a = omega0 * |eps''|."""
    _require_positive(omega0=omega0)
    if eps_imag == 0.0 or math.isnan(eps_imag):
        raise DomainError("eps_imag must be non-zero")
    return 1.0 / (omega0 * abs(eps_imag))


def gamma_critical(length_ratio: float) -> float:
    """Laser threshold (4 pi l / 3 L)^2 of a finite disordered waveguide."""
    if math.isnan(length_ratio) or length_ratio < 1.0:
        raise ValidityError(f"gamma_critical requires L/l >= 1, got {length_ratio}")
    return WAVEGUIDE_THRESHOLD_CONSTANT / length_ratio ** 2


def linear_regime_limit(omega_c: float, tau_dwell: float) -> float:
    """Amplification rate 1 - (Omega_c tau_dwell)^(-1/2) above which a cavity stops being a linear amplifier."""
    _require_positive(omega_c=omega_c, tau_dwell=tau_dwell)
    return 1.0 - 1.0 / math.sqrt(omega_c * tau_dwell)


# --- Parameter records ---

class MediumSpec(BaseModel):
    """Random medium: geometry, sign of the response and the normalized rate."""

    model_config = ConfigDict(frozen=True)

    geometry: Geometry
    response: Response = Response.ABSORBING
    gamma: float = Field(ge=0.0)
    modes: int = Field(default=1, ge=1)
    length_ratio: Optional[float] = Field(default=None, gt=0.0)
    tau_s: Optional[float] = Field(default=None, gt=0.0)
    tau_a: Optional[float] = Field(default=None, gt=0.0)
    tau_dwell: Optional[float] = Field(default=None, gt=0.0)
    delta_omega: Optional[float] = Field(default=None, gt=0.0)
    omega0: Optional[float] = Field(default=None, gt=0.0)
    eps_imag: Optional[float] = None

    @model_validator(mode="after")
    def _length_for_finite(self) -> "MediumSpec":
        if self.geometry is Geometry.WAVEGUIDE_FINITE and self.length_ratio is None:
            raise ValueError("a finite waveguide needs length_ratio = L/l")
        if not math.isfinite(self.gamma):
            raise ValueError("gamma must be finite")
        return self

    @classmethod
    def create(cls, settings: Optional[Settings] = None, **fields) -> "MediumSpec":
        """Validate the record and enforce the laser threshold for amplifying media."""
        try:
            spec = cls(**fields)
        except ValidationError as exc:
            raise _as_domain_error(exc) from exc
        spec.check_threshold(settings)
        return spec

    @classmethod
    def from_rates(cls, geometry: Geometry, response: Response = Response.ABSORBING,
                   modes: int = 1, length_ratio: Optional[float] = None,
                   tau_s: Optional[float] = None, tau_a: Optional[float] = None,
                   tau_dwell: Optional[float] = None, delta_omega: Optional[float] = None,
                   omega0: Optional[float] = None, eps_imag: Optional[float] = None,
                   dimension: int = 3, settings: Optional[Settings] = None) -> "MediumSpec":
        """Derive gamma from the auxiliary rates and build a validated record."""
        if eps_imag is not None:
            expected = Response.AMPLIFYING if eps_imag < 0 else Response.ABSORBING
            if expected is not response:
                raise DomainError(f"eps_imag={eps_imag} describes an {expected.value} medium, not {response.value}")
            if tau_a is None:
                tau_a = absorption_time(omega0, eps_imag)
        if tau_a is None:
            raise DomainError("tau_a (or omega0 with eps_imag) is required to derive gamma")

        geometry = Geometry(geometry)
        if geometry is Geometry.CAVITY_HOLE:
            if tau_dwell is None:
                tau_dwell = dwell_time(modes, delta_omega)
            gamma = gamma_cavity(tau_dwell, tau_a)
        else:
            gamma = gamma_waveguide(tau_s, tau_a, dimension)

        logger.debug(f"Derived gamma={gamma:.6g} for {geometry.value} ({response.value})")
        return cls.create(
            settings=settings, geometry=geometry, response=response, gamma=gamma,
            modes=modes, length_ratio=length_ratio, tau_s=tau_s, tau_a=tau_a,
            tau_dwell=tau_dwell, delta_omega=delta_omega, omega0=omega0, eps_imag=eps_imag,
        )

    @property
    def is_amplifying(self) -> bool:
        return self.response is Response.AMPLIFYING

    def threshold(self) -> float:
        """Critical amplification rate gamma_c of this geometry."""
        if self.geometry is Geometry.CAVITY_HOLE:
            return CAVITY_THRESHOLD
        if self.geometry is Geometry.WAVEGUIDE_FINITE:
            return gamma_critical(self.length_ratio)
        return 0.0

    def check_threshold(self, settings: Optional[Settings] = None) -> None:
        """Raise ThresholdError unless an amplifying medium is below gamma_c - margin."""
        if not self.is_amplifying:
            return
        settings = settings or get_settings()
        gamma_c = self.threshold()
        if self.gamma > gamma_c - settings.threshold_margin:
            raise ThresholdError(self.gamma, gamma_c)


def thouless_number(spec: MediumSpec) -> float:
    """
    Thouless number N_T ~ 1/(tau_dwell * delta_omega), with the order-unity
    coefficient fixed at 1: N for the cavity, N*l/L for a waveguide.
    """
    if spec.geometry is Geometry.CAVITY_HOLE:
        return float(spec.modes)
    if spec.length_ratio is None:
        # semi-infinite: l/L -> 0
        return 0.0
    return spec.modes / spec.length_ratio


def check_large_n(spec: MediumSpec) -> bool:
    """Warn when the large-N regime (N >> 1/sqrt(gamma) or N >> 1/gamma) is not reached."""
    if spec.gamma == 0.0:
        return True
    if spec.geometry is Geometry.CAVITY_HOLE:
        product, condition = spec.modes * spec.gamma, "N*gamma"
    else:
        product, condition = spec.modes * math.sqrt(spec.gamma), "N*sqrt(gamma)"
    if product < 10.0:
        message = f"{condition}={product:.3g} is not large; large-N densities may be inaccurate"
        logger.warning(message)
        warnings.warn(message, RanlaseWarning, stacklevel=2)
        return False
    return True


def check_linear_regime(spec: MediumSpec, omega_c: float) -> bool:
    """Warn when an amplifying cavity is so close to threshold that it no longer amplifies linearly."""
    if not (spec.is_amplifying and spec.geometry is Geometry.CAVITY_HOLE) or spec.tau_dwell is None:
        return True
    limit = linear_regime_limit(omega_c, spec.tau_dwell)
    if spec.gamma > limit:
        message = (f"gamma={spec.gamma:.6g} exceeds the linear-amplifier limit {limit:.6g}; "
                   f"results below threshold may not describe the physical cavity")
        logger.warning(message)
        warnings.warn(message, RanlaseWarning, stacklevel=2)
        return False
    return True


class NarrowBand(BaseModel):
    kind: Literal["narrow"] = "narrow"
    delta_omega: float = Field(gt=0.0)


class BroadLorentzian(BaseModel):
    kind: Literal["lorentzian"] = "lorentzian"
    width: float = Field(gt=0.0, description="Gamma, width of the Lorentzian rate profile")
    gamma0: float = Field(gt=0.0, description="peak normalized rate")

    @property
    def omega_c(self) -> float:
        """Characteristic frequency Gamma * sqrt(1 + gamma0) of the scattering strengths."""
        return self.width * math.sqrt(1.0 + self.gamma0)


class StepBand(BaseModel):
    kind: Literal["step"] = "step"
    omega_c: float = Field(gt=0.0)


Band = Annotated[Union[NarrowBand, BroadLorentzian, StepBand], Field(discriminator="kind")]


class DetectionConfig(BaseModel):
    """Photodetector: efficiency, counting time, detected band, coverage and signed occupation."""

    model_config = ConfigDict(frozen=True)

    efficiency: float = Field(default=1.0, gt=0.0, le=1.0)
    count_time: float = Field(gt=0.0)
    band: Band
    coverage: Coverage = Coverage.ALL_MODES
    occupation: float

    @model_validator(mode="after")
    def _occupation_range(self) -> "DetectionConfig":
        f = self.occupation
        if not math.isfinite(f) or f == 0.0 or f < -1.0:
            raise ValueError(f"occupation must lie in [-1, 0) or (0, inf), got {f}")
        return self

    @classmethod
    def create(cls, **fields) -> "DetectionConfig":
        try:
            return cls(**fields)
        except ValidationError as exc:
            raise _as_domain_error(exc) from exc

    @property
    def alpha_f(self) -> float:
        return self.efficiency * self.occupation

    def nu(self, modes: int) -> float:
        """Black-body degrees of freedom N t delta_omega / 2 pi (N t Gamma for a Lorentzian band)."""
        band = self.band
        if isinstance(band, NarrowBand):
            return modes * self.count_time * band.delta_omega / (2.0 * math.pi)
        if isinstance(band, BroadLorentzian):
            return modes * self.count_time * band.width
        return modes * self.count_time * band.omega_c / (2.0 * math.pi)

    def require_long_time(self, settings: Optional[Settings] = None) -> None:
        """Narrow-band long-time formulas need delta_omega * t above the configured guard."""
        settings = settings or get_settings()
        if not isinstance(self.band, NarrowBand):
            raise DomainError(f"long-time narrow-band formulas need a narrow band, got {self.band.kind}")
        product = self.band.delta_omega * self.count_time
        if product < settings.long_time_min:
            raise DomainError(
                f"delta_omega*t={product:.4g} is below the long-time guard {settings.long_time_min:g}"
            )
