"""
Monte Carlo ensembles of scattering matrices.

Absorbing chaotic cavities are built as a Haar-random unitary with a weakly
transmitting N'-channel drain attached (uniform absorption is statistically
equivalent to such a fictitious waveguide). Disordered waveguides are built as
a cascade of thin slices. Amplifying media are reached only through the
duality S_- = (S_+^dagger)^-1.

Every sample draws from its own generator, seeded by SeedSequence(seed,
spawn_key=(index,)), so results do not depend on the number of workers.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from scipy import stats

from ranlase.config import Settings, get_settings
from ranlase.densities import StrengthDensity, spectral_moment
from ranlase.errors import (
    ConditioningError,
    ConvergenceError,
    DomainError,
    MonteCarloError,
    SingularDualError,
    SkippedSamplesError,
    SupportMismatchError,
)

logger = logging.getLogger(__name__)

# (1 - r1' r2) with a larger condition number is treated as singular
CONDITION_LIMIT = 1e12
# condition numbers are only computed for cascade inverses up to this size
CONDITION_CHECK_MAX_DIM = 256
SKIP_FRACTION_LIMIT = 1e-3
MIN_HISTOGRAM_SAMPLES = 1000
DEFAULT_ABSORPTION_COEFFICIENT = 0.25


class Symmetry(str, Enum):
    UNITARY = "cue"
    ORTHOGONAL = "coe"


# --- Scattering matrices ---

@dataclass(frozen=True)
class ScatteringBlocks:
    """
    Two-port scattering matrix [[r, t'], [t, r']] with `left` channels on the
    left and `right` channels on the right: r is left x left, t is right x left.
    """

    r: np.ndarray
    t: np.ndarray
    t_prime: np.ndarray
    r_prime: np.ndarray

    @property
    def left(self) -> int:
        return self.r.shape[0]

    @property
    def right(self) -> int:
        return self.r_prime.shape[0]

    def as_matrix(self) -> np.ndarray:
        return np.block([[self.r, self.t_prime], [self.t, self.r_prime]])

    @classmethod
    def from_matrix(cls, matrix: np.ndarray, left: int) -> "ScatteringBlocks":
        matrix = np.asarray(matrix)
        return cls(r=matrix[:left, :left], t=matrix[left:, :left],
                   t_prime=matrix[:left, left:], r_prime=matrix[left:, left:])

    @classmethod
    def transparent(cls, channels: int) -> "ScatteringBlocks":
        """Reflectionless element with unit transmission: the identity for compose_star."""
        zero = np.zeros((channels, channels), dtype=complex)
        one = np.eye(channels, dtype=complex)
        return cls(r=zero, t=one, t_prime=one.copy(), r_prime=zero.copy())

    @classmethod
    def transmission_only(cls, unitary: np.ndarray) -> "ScatteringBlocks":
        """Mode mixer t = U, t' = U^T without reflection."""
        channels = unitary.shape[0]
        zero = np.zeros((channels, channels), dtype=complex)
        return cls(r=zero, t=unitary, t_prime=unitary.T.copy(), r_prime=zero.copy())


@dataclass(frozen=True)
class SubunitaryS:
    """A sampled scattering matrix with the sorted eigenvalues of S S^dagger."""

    matrix: np.ndarray
    strengths: np.ndarray
    index: int
    provenance: str
    blocks: Optional[ScatteringBlocks] = None


def strengths_of(matrix: np.ndarray) -> np.ndarray:
    """Sorted eigenvalues of S S^dagger."""
    return np.linalg.eigvalsh(matrix @ matrix.conj().T)


def sample_unitary(dim: int, symmetry: Symmetry = Symmetry.UNITARY,
                   rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """
    Haar-random unitary from the QR decomposition of a complex Ginibre matrix,
    with the phases of diag(R) moved into Q. The orthogonal ensemble is U^T U.
    """
    if dim < 1:
        raise DomainError(f"dim must be >= 1, got {dim}")
    rng = rng or np.random.default_rng()
    ginibre = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / math.sqrt(2.0)
    q, r = np.linalg.qr(ginibre)
    diagonal = np.diagonal(r)
    q = q * (diagonal / np.abs(diagonal))
    if Symmetry(symmetry) is Symmetry.ORTHOGONAL:
        return q.T @ q
    return q


def _solve(matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    if matrix.shape[0] <= CONDITION_CHECK_MAX_DIM:
        condition = np.linalg.cond(matrix)
        if not condition < CONDITION_LIMIT:
            raise ConditioningError(f"cascade inverse has condition number {condition:.3e}")
    try:
        solution = np.linalg.solve(matrix, rhs)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError(f"cascade inverse is singular: {exc}") from exc
    if not np.all(np.isfinite(solution)):
        raise ConditioningError("cascade inverse produced non-finite values")
    return solution


def compose_star(first: ScatteringBlocks, second: ScatteringBlocks) -> ScatteringBlocks:
    """
    Scattering matrix of `first` followed by `second` (Redheffer star product):

        t  = t2 (1 - r1' r2)^-1 t1
        r  = r1 + t1' r2 (1 - r1' r2)^-1 t1
        t' = t1' (1 - r2 r1')^-1 t2'
        r' = r2' + t2 r1' (1 - r2 r1')^-1 t2'
    """
    if first.right != second.left:
        raise DomainError(f"cannot cascade {first.right} right channels into {second.left} left channels")
    one = np.eye(first.right, dtype=complex)
    forward = _solve(one - first.r_prime @ second.r, first.t)
    backward = _solve(one - second.r @ first.r_prime, second.t_prime)
    return ScatteringBlocks(
        r=first.r + first.t_prime @ second.r @ forward,
        t=second.t @ forward,
        t_prime=first.t_prime @ backward,
        r_prime=second.r_prime + second.t @ first.r_prime @ backward,
    )


def barrier(channels: int, transparency: float) -> ScatteringBlocks:
    """
    Mode-independent tunnel barrier: r = -sqrt(1 - G), t = t' = sqrt(G),
    r' = +sqrt(1 - G) on every channel.
    """
    if not 0.0 < transparency <= 1.0:
        raise DomainError(f"barrier transparency must lie in (0, 1], got {transparency}")
    one = np.eye(channels, dtype=complex)
    reflect = math.sqrt(1.0 - transparency)
    transmit = math.sqrt(transparency)
    return ScatteringBlocks(r=-reflect * one, t=transmit * one, t_prime=transmit * one.copy(),
                            r_prime=reflect * one.copy())


def dual_amplifying(sample: SubunitaryS, floor: float = 1e-14) -> SubunitaryS:
    """S_- = (S_+^dagger)^-1; the strengths are the reciprocals of those of S_+."""
    if sample.strengths.size and float(np.min(sample.strengths)) <= floor:
        raise SingularDualError(
            f"sample {sample.index} has scattering strength {float(np.min(sample.strengths)):.3e}; no dual exists"
        )
    try:
        matrix = np.linalg.inv(sample.matrix.conj().T)
    except np.linalg.LinAlgError as exc:
        raise SingularDualError(f"sample {sample.index} is singular: {exc}") from exc
    provenance = sample.provenance[5:-1] if sample.provenance.startswith("dual(") else f"dual({sample.provenance})"
    return SubunitaryS(matrix=matrix, strengths=np.sort(1.0 / sample.strengths), index=sample.index,
                       provenance=provenance)


# --- Parallel, order-independent sample generation ---

def sample_rng(seed: int, index: int) -> np.random.Generator:
    """Generator for one sample, independent of every other sample index."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def _check_skipped(skipped: int, count: int, label: str) -> None:
    if skipped > SKIP_FRACTION_LIMIT * count:
        raise SkippedSamplesError(f"{label}: {skipped} of {count} samples were ill-conditioned")


def _run_samples(draw: Callable[[int], SubunitaryS], count: int, workers: Optional[int],
                 label: str) -> List[SubunitaryS]:
    workers = workers or get_settings().threads

    def guarded(index: int) -> Optional[SubunitaryS]:
        try:
            return draw(index)
        except ConditioningError as exc:
            logger.debug(f"{label}: sample {index} skipped ({exc})")
            return None

    logger.info(f"{label}: drawing {count} samples with {workers} worker(s)")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(guarded, range(count)))
    else:
        results = [guarded(i) for i in range(count)]

    samples = [s for s in results if s is not None]
    skipped = count - len(samples)
    _check_skipped(skipped, count, label)
    if skipped:
        logger.warning(f"{label}: skipped {skipped} ill-conditioned sample(s)")
    return samples


# --- Chaotic cavity ---

class EnsembleConfig(BaseModel):
    """
    Absorbing chaotic cavity ensemble. The drain has N' = ceil(N gamma / G)
    channels of transparency N gamma / N', so N' G = N gamma exactly.
    """

    model_config = ConfigDict(frozen=True)

    modes: int = Field(ge=1)
    gamma: float = Field(ge=0.0)
    barrier: float = Field(default=0.02, gt=0.0, le=0.05)
    symmetry: Symmetry = Symmetry.UNITARY
    samples: int = Field(default=1000, ge=1)
    seed: int = Field(default=0, ge=0)
    bins: int = Field(default=40, ge=2)

    @model_validator(mode="after")
    def _finite_gamma(self) -> "EnsembleConfig":
        if not math.isfinite(self.gamma):
            raise ValueError("gamma must be finite")
        return self

    @classmethod
    def create(cls, **fields) -> "EnsembleConfig":
        try:
            return cls(**fields)
        except ValidationError as exc:
            raise DomainError(str(exc)) from exc

    @property
    def fictitious_modes(self) -> int:
        if self.gamma == 0.0:
            return 0
        # guard against ceil(49.999999999) style rounding up
        return max(1, math.ceil(self.modes * self.gamma / self.barrier - 1e-9))

    @property
    def barrier_transparency(self) -> float:
        """Adjusted G with N' G = N gamma."""
        channels = self.fictitious_modes
        return self.modes * self.gamma / channels if channels else 0.0


def draw_cavity_sample(cfg: EnsembleConfig, index: int) -> SubunitaryS:
    """One absorbing cavity: Haar unitary of size N + N' with the drain barrier attached."""
    rng = sample_rng(cfg.seed, index)
    channels = cfg.fictitious_modes
    unitary = sample_unitary(cfg.modes + channels, cfg.symmetry, rng)
    if channels == 0:
        matrix = unitary
    else:
        cavity = ScatteringBlocks.from_matrix(unitary, cfg.modes)
        matrix = compose_star(cavity, barrier(channels, cfg.barrier_transparency)).r
    return SubunitaryS(matrix=matrix, strengths=strengths_of(matrix), index=index,
                       provenance=f"cavity(N={cfg.modes}, gamma={cfg.gamma:g})")


def sample_cavity_strengths(cfg: EnsembleConfig, workers: Optional[int] = None) -> List[SubunitaryS]:
    """cfg.samples absorbing cavity samples in index order."""
    return _run_samples(lambda i: draw_cavity_sample(cfg, i), cfg.samples, workers,
                        f"cavity N={cfg.modes} gamma={cfg.gamma:g} N'={cfg.fictitious_modes}")


# --- Disordered waveguide ---

def absorption_amplitude(gamma: float, delta: float,
                         coefficient: float = DEFAULT_ABSORPTION_COEFFICIENT) -> float:
    """
    Amplitude factor exp(-coefficient * gamma * delta) per traversal of a slice
    of length delta*l. The default 1/4 makes the intensity decay at rate gamma/2
    per mean free path, which with unit backscattering per mean free path
    reproduces the semi-infinite absorptivity (gamma/2)(sqrt(1 + 4/gamma) - 1).
    The slice-model convention 3/32 is available for comparison with runs that
    used it; it rescales gamma by 3/8.
    """
    if coefficient < 0.0:
        raise DomainError(f"absorption coefficient must be >= 0, got {coefficient}")
    return math.exp(-coefficient * gamma * delta)


def default_reflector_constant(delta: float) -> float:
    """c_r = 1/(1 + delta): incoherent slices in series then obey T = 1/(1 + L/l) exactly."""
    return 1.0 / (1.0 + delta)


def reflector(channels: int, delta: float, gamma: float, c_r: float,
              coefficient: float = DEFAULT_ABSORPTION_COEFFICIENT) -> ScatteringBlocks:
    """Symmetric partial reflector r = r' = i sqrt(R), t = t' = a sqrt(1 - R) with R = c_r delta."""
    reflectance = c_r * delta
    if not 0.0 <= reflectance < 1.0:
        raise DomainError(f"slice reflectance c_r*delta must lie in [0, 1), got {reflectance}")
    one = np.eye(channels, dtype=complex)
    r = 1j * math.sqrt(reflectance) * one
    t = absorption_amplitude(gamma, delta, coefficient) * math.sqrt(1.0 - reflectance) * one
    return ScatteringBlocks(r=r, t=t, t_prime=t.copy(), r_prime=r.copy())


def draw_slice(channels: int, delta: float, gamma: float, c_r: float, symmetry: Symmetry,
               rng: np.random.Generator, coefficient: float = DEFAULT_ABSORPTION_COEFFICIENT) -> ScatteringBlocks:
    """Haar mixer, partial reflector, Haar mixer."""
    first = ScatteringBlocks.transmission_only(sample_unitary(channels, symmetry, rng))
    last = ScatteringBlocks.transmission_only(sample_unitary(channels, symmetry, rng))
    return compose_star(compose_star(first, reflector(channels, delta, gamma, c_r, coefficient)), last)


def _slice_count(length_ratio: float, delta: float) -> int:
    return max(1, int(round(length_ratio / delta)))


def extend_waveguide(blocks: ScatteringBlocks, slices: int, delta: float, gamma: float, c_r: float,
                     symmetry: Symmetry, rng: np.random.Generator,
                     coefficient: float = DEFAULT_ABSORPTION_COEFFICIENT) -> ScatteringBlocks:
    """Append `slices` fresh slices on the right of an existing cascade."""
    modes = blocks.left
    for _ in range(slices):
        blocks = compose_star(blocks, draw_slice(modes, delta, gamma, c_r, symmetry, rng, coefficient))
    return blocks


def draw_waveguide(modes: int, length_ratio: float, gamma: float, delta: float, c_r: float,
                   symmetry: Symmetry, rng: np.random.Generator,
                   coefficient: float = DEFAULT_ABSORPTION_COEFFICIENT) -> ScatteringBlocks:
    """Cascade slices from left to right into the scattering matrix of a waveguide of length L/l."""
    return extend_waveguide(ScatteringBlocks.transparent(modes), _slice_count(length_ratio, delta),
                            delta, gamma, c_r, symmetry, rng, coefficient)


@dataclass(frozen=True)
class WaveguideRun:
    samples: List[SubunitaryS]
    length_ratio: float
    ks_history: Tuple[Tuple[float, float], ...] = ()


def _check_waveguide_inputs(length_ratio: float, delta: float) -> None:
    if not 0.0 < delta <= 0.05:
        raise DomainError(f"slice length delta L/l must lie in (0, 0.05], got {delta}")
    if not length_ratio >= 1.0:
        raise DomainError(f"L/l must be >= 1, got {length_ratio}")


def sample_waveguide_strengths(modes: int, length_ratio: float, gamma: float, delta: float = 0.05,
                               samples: int = 200, seed: int = 0, semi_infinite: bool = False,
                               c_r: Optional[float] = None, symmetry: Symmetry = Symmetry.UNITARY,
                               ks_tol: float = 0.01, workers: Optional[int] = None,
                               absorption_coefficient: float = DEFAULT_ABSORPTION_COEFFICIENT) -> WaveguideRun:
    """
    Reflection strengths of an absorbing disordered waveguide of length L/l.

    With `semi_infinite`, L starts at `length_ratio` and doubles until the
    Kolmogorov distance between the pooled strengths of successive lengths
    falls below ks_tol; beyond L/l = 64/sqrt(gamma) a ConvergenceError is raised.
    `absorption_coefficient` sets the per-slice amplitude factor, see
    absorption_amplitude.
    """
    _check_waveguide_inputs(length_ratio, delta)
    c_r = default_reflector_constant(delta) if c_r is None else c_r
    label = f"waveguide N={modes} gamma={gamma:g}"

    if not semi_infinite:
        def draw(index: int) -> SubunitaryS:
            blocks = draw_waveguide(modes, length_ratio, gamma, delta, c_r, symmetry, sample_rng(seed, index),
                                    absorption_coefficient)
            return SubunitaryS(matrix=blocks.r, strengths=strengths_of(blocks.r), index=index,
                               provenance=f"waveguide(L/l={length_ratio:g}, gamma={gamma:g}, "
                                          f"a={absorption_coefficient:g})",
                               blocks=blocks)

        return WaveguideRun(samples=_run_samples(draw, samples, workers, label), length_ratio=length_ratio)

    if gamma <= 0.0:
        raise DomainError("a semi-infinite waveguide needs gamma > 0 to become stationary")
    limit = 64.0 / math.sqrt(gamma)
    workers = workers or get_settings().threads

    # each sample keeps its own generator, so growing all cascades one doubling
    # at a time draws the same slices as a single long cascade
    generators = [sample_rng(seed, index) for index in range(samples)]
    cascades = [ScatteringBlocks.transparent(modes) for _ in range(samples)]
    dead = set()

    def grow(index: int, slices: int) -> Optional[np.ndarray]:
        if index in dead:
            return None
        try:
            cascades[index] = extend_waveguide(cascades[index], slices, delta, gamma, c_r, symmetry,
                                               generators[index], absorption_coefficient)
        except ConditioningError as exc:
            logger.debug(f"{label}: sample {index} dropped ({exc})")
            dead.add(index)
            return None
        return strengths_of(cascades[index].r)

    def grow_all(slices: int) -> List[Optional[np.ndarray]]:
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                grown = list(pool.map(lambda i: grow(i, slices), range(samples)))
        else:
            grown = [grow(i, slices) for i in range(samples)]
        _check_skipped(len(dead), samples, label)
        return grown

    length = length_ratio
    done = _slice_count(length, delta)
    previous = grow_all(done)
    history = []
    logger.info(f"{label}: growing {samples} cascades from L/l={length:g} in doublings")
    while length * 2.0 <= limit:
        length *= 2.0
        target = _slice_count(length, delta)
        current = grow_all(target - done)
        done = target
        alive = [i for i in range(samples) if i not in dead]
        distance = float(stats.ks_2samp(np.concatenate([previous[i] for i in alive]),
                                        np.concatenate([current[i] for i in alive])).statistic)
        history.append((length, distance))
        logger.debug(f"{label}: KS distance {distance:.4f} at L/l={length:g}")
        if distance < ks_tol:
            chosen = [
                SubunitaryS(matrix=cascades[i].r, strengths=current[i], index=i,
                            provenance=f"waveguide(semi-infinite, L/l={length:g}, gamma={gamma:g}, "
                                       f"a={absorption_coefficient:g})")
                for i in alive
            ]
            if dead:
                logger.warning(f"{label}: skipped {len(dead)} ill-conditioned sample(s)")
            logger.info(f"{label}: stationary at L/l={length:g} (KS {distance:.4f})")
            return WaveguideRun(samples=chosen, length_ratio=length, ks_history=tuple(history))
        previous = current
    raise ConvergenceError(
        f"{label}: strength histogram not stationary up to L/l={length:g} "
        f"(last KS distance {history[-1][1] if history else float('nan'):.4f}, tolerance {ks_tol:g})"
    )


def finite_waveguide_emission(blocks: ScatteringBlocks) -> np.ndarray:
    """
    Sorted eigenvalues of r r^dagger + t' t'^dagger: the strengths seen by a
    detector at the left end while the right end stays open.
    """
    return np.linalg.eigvalsh(blocks.r @ blocks.r.conj().T + blocks.t_prime @ blocks.t_prime.conj().T)


@dataclass(frozen=True)
class CalibrationResult:
    c_r: float
    lengths: Tuple[float, ...]
    measured: Tuple[float, ...]
    target: Tuple[float, ...]
    deviations: Tuple[float, ...]
    passed: bool
    iterations: int


def _mean_transmission(modes: int, length_ratio: float, delta: float, c_r: float, samples: int,
                       seed: int, symmetry: Symmetry, workers: Optional[int]) -> float:
    run = sample_waveguide_strengths(modes, length_ratio, 0.0, delta, samples, seed, c_r=c_r,
                                     symmetry=symmetry, workers=workers)
    traces = [float(np.real(np.trace(s.blocks.t @ s.blocks.t.conj().T))) / modes for s in run.samples]
    return math.fsum(traces) / len(traces)


def calibrate_reflector(modes: int, lengths: Sequence[float] = (2.0, 8.0), delta: float = 0.05,
                        samples: int = 100, seed: int = 0, c_r: Optional[float] = None,
                        tolerance: float = 0.05, max_iterations: int = 4,
                        symmetry: Symmetry = Symmetry.UNITARY,
                        workers: Optional[int] = None) -> CalibrationResult:
    """
    Check <Tr t t^dagger>/N = 1/(1 + L/l) for the lossless slice cascade. When a
    length misses by more than `tolerance`, c_r is rescaled by the mean ratio of
    the target and measured resistances (1/T - 1) and the check repeated.
    """
    c_r = default_reflector_constant(delta) if c_r is None else c_r
    targets = tuple(1.0 / (1.0 + length) for length in lengths)
    for iteration in range(1, max_iterations + 1):
        measured = tuple(_mean_transmission(modes, length, delta, c_r, samples, seed, symmetry, workers)
                         for length in lengths)
        deviations = tuple(m / t - 1.0 for m, t in zip(measured, targets))
        passed = all(abs(d) <= tolerance for d in deviations)
        logger.info(f"Calibration iteration {iteration}: c_r={c_r:.6f} deviations="
                    f"{', '.join(f'{d:+.4f}' for d in deviations)}")
        if passed or iteration == max_iterations:
            break
        scale = [(1.0 / t - 1.0) / (1.0 / m - 1.0) for m, t in zip(measured, targets)]
        c_r *= math.fsum(scale) / len(scale)
    return CalibrationResult(c_r=c_r, lengths=tuple(lengths), measured=measured, target=targets,
                             deviations=deviations, passed=passed, iterations=iteration)


# --- Histograms and comparison with analytic densities ---

@dataclass(frozen=True)
class EmpiricalDensity:
    """Histogram of all strengths of all samples; `density` integrates to N."""

    edges: np.ndarray
    counts: np.ndarray
    samples: int
    modes: int
    values: np.ndarray = field(repr=False)

    @property
    def density(self) -> np.ndarray:
        return self.counts / (self.samples * np.diff(self.edges))

    @property
    def errors(self) -> np.ndarray:
        """Poisson error of `density` per bin."""
        return np.sqrt(self.counts) / (self.samples * np.diff(self.edges))


def pooled_strengths(samples: Sequence[SubunitaryS]) -> np.ndarray:
    return np.concatenate([s.strengths for s in samples]) if samples else np.empty(0)


def empirical_density(samples: Sequence[SubunitaryS], bins=40,
                      support: Optional[Tuple[float, float]] = None) -> EmpiricalDensity:
    """Fixed-bin histogram of the pooled strengths."""
    if len(samples) < MIN_HISTOGRAM_SAMPLES:
        raise DomainError(f"an empirical density needs >= {MIN_HISTOGRAM_SAMPLES} samples, got {len(samples)}")
    values = pooled_strengths(samples)
    if np.ndim(bins) == 0:
        lo, hi = support if support is not None else (float(values.min()), float(values.max()))
        if math.isinf(hi):
            hi = float(values.max())
        edges = np.linspace(lo, hi, int(bins) + 1)
    else:
        edges = np.asarray(bins, dtype=float)
    counts, _ = np.histogram(values, bins=edges)
    return EmpiricalDensity(edges=edges, counts=counts, samples=len(samples),
                            modes=samples[0].strengths.size, values=values)


@dataclass(frozen=True)
class ComparisonReport:
    chi_square: float
    dof: int
    p_value: float
    moment_deltas: dict
    outside_fraction: float

    def passes(self, alpha: float = 0.01) -> bool:
        return self.p_value > alpha


def compare(empirical: EmpiricalDensity, analytic: StrengthDensity, p_max: int = 2,
            edge_tolerance: float = 0.05, min_expected: float = 5.0,
            settings: Optional[Settings] = None) -> ComparisonReport:
    """
    Chi-square test of the histogram against the analytic density integrated
    over each bin, plus relative deltas of the moments m_p/N.
    Bins with fewer than `min_expected` expected counts are pooled.
    """
    values = empirical.values
    lo = analytic.sigma_min - edge_tolerance
    hi = analytic.sigma_max + edge_tolerance
    outside = float(np.mean((values < lo) | (values > hi)))
    if outside > 0.01:
        raise SupportMismatchError(
            f"{outside:.2%} of the sampled strengths lie outside the support "
            f"[{analytic.sigma_min:.4g}, {analytic.sigma_max:.4g}] of {analytic.provenance}"
        )

    scale = empirical.samples * empirical.modes / analytic.total_weight
    expected = np.array([scale * analytic.mass_between(a, b)
                         for a, b in zip(empirical.edges[:-1], empirical.edges[1:])])
    observed = empirical.counts.astype(float)
    keep = expected >= min_expected
    chi_square = float(np.sum((observed[keep] - expected[keep]) ** 2 / expected[keep]))
    cells = int(np.count_nonzero(keep))
    pooled_expected = float(expected[~keep].sum())
    if pooled_expected >= min_expected:
        pooled_observed = float(observed[~keep].sum())
        chi_square += (pooled_observed - pooled_expected) ** 2 / pooled_expected
        cells += 1
    dof = max(cells - 1, 1)
    p_value = float(stats.chi2.sf(chi_square, dof))

    deltas = {}
    if not analytic.divergent:
        for p in range(1, p_max + 1):
            sampled = math.fsum((1.0 - values) ** p) / values.size
            exact = spectral_moment(analytic, p, settings) / analytic.total_weight
            deltas[p] = (sampled - exact) / exact if exact else sampled
    logger.info(f"Compared {values.size} strengths with {analytic.provenance}: "
                f"chi2={chi_square:.2f} dof={dof} p={p_value:.4f}")
    return ComparisonReport(chi_square=chi_square, dof=dof, p_value=p_value, moment_deltas=deltas,
                            outside_fraction=outside)


def sample_from_density(rho: StrengthDensity, count: int, rng: Optional[np.random.Generator] = None,
                        nodes: int = 513) -> np.ndarray:
    """
    Inverse-CDF sampling from an analytic density. The CDF is tabulated on an
    even grid in theta (sigma = sigma_min + width sin^2 theta) and inverted by
    linear interpolation. Dual densities sample their absorbing partner.
    """
    rng = rng or np.random.default_rng()
    if rho.dual_of is not None:
        return 1.0 / sample_from_density(rho.dual_of, count, rng, nodes)
    lo, hi = rho.support
    theta = np.linspace(0.0, 0.5 * math.pi, nodes)
    sigma = lo + (hi - lo) * np.sin(theta) ** 2
    pieces = [rho.mass_between(a, b) for a, b in zip(sigma[:-1], sigma[1:])]
    cdf = np.concatenate([[0.0], np.cumsum(pieces)])
    cdf /= cdf[-1]
    u = rng.random(count)
    theta_u = np.interp(u, cdf, theta)
    return lo + (hi - lo) * np.sin(theta_u) ** 2


def as_samples(values: np.ndarray, modes: int, provenance: str) -> List[SubunitaryS]:
    """Group a flat array of strengths into pseudo-samples of `modes` values."""
    usable = (values.size // modes) * modes
    grouped = np.sort(values[:usable].reshape(-1, modes), axis=1)
    return [SubunitaryS(matrix=np.empty((0, 0)), strengths=row, index=i, provenance=provenance)
            for i, row in enumerate(grouped)]


def strengths_table(samples: Sequence[SubunitaryS]) -> pd.DataFrame:
    """One row per sample: its index followed by sigma_1 .. sigma_N."""
    if not samples:
        return pd.DataFrame(columns=["sample"])
    modes = samples[0].strengths.size
    frame = pd.DataFrame(np.vstack([s.strengths for s in samples]),
                         columns=[f"sigma_{k}" for k in range(1, modes + 1)])
    frame.insert(0, "sample", [s.index for s in samples])
    return frame


def check_absorbing(samples: Sequence[SubunitaryS], tolerance: float = 1e-10) -> None:
    """Every absorbing strength must lie in [0, 1]."""
    values = pooled_strengths(samples)
    if values.size and (values.min() < -tolerance or values.max() > 1.0 + tolerance):
        raise MonteCarloError(f"absorbing strengths outside [0, 1]: min={values.min():.3e}, max={values.max():.6f}")
