# cli.py
"""
Batch command-line interface.

    ranlase density     (sigma, rho(sigma)) of an analytic strength density
    ranlase stats       closed-form n, Var n and nu_eff, optionally swept over a grid
    ranlase pmf         photocount distribution P(n)
    ranlase montecarlo  random-matrix ensemble compared with its analytic density

Values from `--config FILE` (flat key=value lines) act as defaults; explicit
flags override them. Exit codes: 0 success, 2 domain, 3 I/O, 4 threshold,
5 Monte Carlo failure.
"""

import argparse
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
from dotenv import dotenv_values

from ranlase import __version__
from ranlase.config import configure_logging, get_settings
from ranlase.densities import StrengthDensity, density_for, dual_density, rho_cavity_full, rho_waveguide_semiinf
from ranlase.distributions import (
    CountDistribution,
    invert_generating,
    moments_from_pmf,
    pmf_bessel_k,
    pmf_negative_binomial,
    pmf_poisson,
)
from ranlase.errors import DomainError, MonteCarloError, RanlaseError, ThresholdError
from ranlase.medium import (
    DetectionConfig,
    Geometry,
    MediumSpec,
    Response,
    check_large_n,
    check_linear_regime,
    effective_occupation,
    gamma_critical,
)
from ranlase.output import provenance_header, write_table
from ranlase.photostat import (
    absorptivity,
    broadband_stats,
    closed_form_narrowband,
    generating_long_time,
)
from ranlase.rmt import (
    DEFAULT_ABSORPTION_COEFFICIENT,
    EnsembleConfig,
    Symmetry,
    calibrate_reflector,
    check_absorbing,
    compare,
    dual_amplifying,
    empirical_density,
    pooled_strengths,
    sample_cavity_strengths,
    sample_waveguide_strengths,
    strengths_table,
)

logger = logging.getLogger(__name__)

SWEEP_PARAMETERS = ("gamma", "gamma_ratio", "gamma0", "length_ratio", "count_time", "alpha")
# run-control options kept out of the provenance header
_NOT_PROVENANCE = {"command", "output", "format", "config", "log_level", "log_file", "handler"}


@dataclass
class RunConfig:
    """Resolved command line: subcommand, output target and every model parameter."""

    command: str
    output: Optional[str]
    fmt: str
    seed: int
    parameters: dict = field(default_factory=dict)

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        parameters = {k: v for k, v in vars(args).items() if k not in _NOT_PROVENANCE and k != "seed"}
        return cls(command=args.command, output=args.output, fmt=args.format, seed=args.seed,
                   parameters=parameters)


# --- Argument parsing ---

def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=str, default=None, help="key=value file with default option values")
    parser.add_argument("-o", "--output", type=str, default=None, help="output file (stdout when omitted)")
    parser.add_argument("--format", type=str, default="csv", choices=["csv", "json"])
    parser.add_argument("--seed", type=int, default=0, help="master random seed (default 0)")
    parser.add_argument("--log-level", type=str, default=None, help="overrides LOG_LEVEL")
    parser.add_argument("--log-file", type=str, default=None, help="overrides LOG_FILE; empty disables file logging")


def _add_medium(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--geometry", type=str, default="cavity", choices=[g.value for g in Geometry])
    parser.add_argument("--response", type=str, default="absorbing", choices=[r.value for r in Response])
    parser.add_argument("--gamma", type=float, default=None, help="normalized absorption/amplification rate")
    parser.add_argument("--gamma-ratio", dest="gamma_ratio", type=float, default=None,
                        help="gamma/gamma_c for the finite waveguide")
    parser.add_argument("--N", dest="modes", type=int, default=1, help="number of modes")
    parser.add_argument("--length-ratio", dest="length_ratio", type=float, default=None, help="L/l")
    parser.add_argument("--tau-dwell", dest="tau_dwell", type=float, default=None)


def _add_detection(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--alpha", type=float, default=1.0, help="detection efficiency")
    parser.add_argument("--f", dest="occupation", type=float, default=None, help="signed occupation number")
    parser.add_argument("--x", type=float, default=None, help="hbar*omega/(k_B T) instead of --f")
    parser.add_argument("--t", dest="count_time", type=float, default=None, help="counting time")
    parser.add_argument("--band", type=str, default="narrow", choices=["narrow", "lorentzian", "step"])
    parser.add_argument("--delta-omega", dest="delta_omega", type=float, default=None)
    parser.add_argument("--width", type=float, default=None, help="Gamma of a Lorentzian band")
    parser.add_argument("--gamma0", type=float, default=None, help="peak rate of a Lorentzian band")
    parser.add_argument("--omega-c", dest="omega_c", type=float, default=None)
    parser.add_argument("--coverage", type=str, default="all", choices=["all", "single"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ranlase", description="Photodetection statistics of random media")
    parser.add_argument("--version", action="version", version=f"ranlase {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    density = sub.add_parser("density", help="tabulate an analytic scattering-strength density")
    _add_common(density)
    _add_medium(density)
    density.add_argument("--dual", action="store_true", help="amplifying dual of the absorbing density")
    density.add_argument("--weak", action="store_true", help="weak-absorption cavity density")
    density.add_argument("--points", type=int, default=400)
    density.set_defaults(handler=cmd_density)

    stats = sub.add_parser("stats", help="mean, variance and nu_eff from the closed forms")
    _add_common(stats)
    _add_medium(stats)
    _add_detection(stats)
    stats.add_argument("--sweep", type=str, default=None, choices=SWEEP_PARAMETERS)
    stats.add_argument("--min", dest="sweep_min", type=float, default=None)
    stats.add_argument("--max", dest="sweep_max", type=float, default=None)
    stats.add_argument("--points", type=int, default=101)
    stats.add_argument("--scale", type=str, default="linear", choices=["linear", "log"])
    stats.add_argument("--c1", type=float, default=0.0, help="O(1) constant of the leading-log waveguide forms")
    stats.set_defaults(handler=cmd_stats)

    pmf = sub.add_parser("pmf", help="photocount distribution")
    _add_common(pmf)
    _add_medium(pmf)
    _add_detection(pmf)
    pmf.add_argument("--family", type=str, default="numeric",
                     choices=["negative-binomial", "poisson", "glauber", "numeric"])
    pmf.add_argument("--mean", type=float, default=None)
    pmf.add_argument("--nu", type=float, default=None)
    pmf.add_argument("--kappa", type=float, default=None)
    pmf.add_argument("--n-max", dest="n_max", type=int, default=100)
    pmf.set_defaults(handler=cmd_pmf)

    mc = sub.add_parser("montecarlo", help="random-matrix validation of the analytic densities")
    _add_common(mc)
    mc.add_argument("--ensemble", type=str, default="cavity", choices=["cavity", "waveguide"])
    mc.add_argument("--N", dest="modes", type=int, default=10)
    mc.add_argument("--gamma", type=float, default=1.0)
    mc.add_argument("--samples", type=int, default=1000)
    mc.add_argument("--barrier", type=float, default=0.02)
    mc.add_argument("--symmetry", type=str, default="cue", choices=[s.value for s in Symmetry])
    mc.add_argument("--bins", type=int, default=40)
    mc.add_argument("--dual", action="store_true")
    mc.add_argument("--length-ratio", dest="length_ratio", type=float, default=2.0)
    mc.add_argument("--delta", type=float, default=0.05)
    mc.add_argument("--absorption-coefficient", dest="absorption_coefficient", type=float,
                    default=DEFAULT_ABSORPTION_COEFFICIENT, help="per-slice amplitude factor exp(-a gamma delta)")
    mc.add_argument("--semi-infinite", dest="semi_infinite", action="store_true")
    mc.add_argument("--calibrate", action="store_true", help="run the lossless Ohm's-law calibration first")
    mc.add_argument("--ks-tol", dest="ks_tol", type=float, default=0.01)
    mc.add_argument("--alpha-level", dest="alpha_level", type=float, default=0.01)
    mc.add_argument("--strengths", type=str, default=None, help="also export per-sample strengths as CSV")
    mc.set_defaults(handler=cmd_montecarlo)
    return parser


def _subparser(parser: argparse.ArgumentParser, command: str) -> argparse.ArgumentParser:
    for action in parser._subparsers._group_actions:
        if command in action.choices:
            return action.choices[command]
    raise DomainError(f"unknown subcommand {command!r}")


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    """Parse the command line, using values from --config as defaults."""
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    if args.config:
        values = dotenv_values(args.config)
        if not values and not _readable(args.config):
            raise DomainError(f"cannot read config file {args.config}")
        sub = _subparser(parser, args.command)
        known = {action.dest: action for action in sub._actions}
        defaults = {}
        for key, value in values.items():
            dest = key.strip().lower().replace("-", "_")
            if dest == "n":
                dest = "modes"
            if dest not in known or dest in ("help", "config"):
                raise DomainError(f"unknown key {key!r} in config file {args.config}")
            if value is None:
                continue
            # store_true flags take their value from the file as a boolean
            if known[dest].nargs == 0:
                defaults[dest] = value.strip().lower() in ("1", "true", "yes", "on")
            else:
                defaults[dest] = value
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def _readable(path: str) -> bool:
    try:
        with open(path, encoding="utf-8"):
            return True
    except OSError:
        return False


# --- Builders shared by the subcommands ---

def _resolve_gamma(params: dict) -> float:
    if params.get("gamma_ratio") is not None:
        if params.get("length_ratio") is None:
            raise DomainError("--gamma-ratio needs --length-ratio")
        return params["gamma_ratio"] * gamma_critical(params["length_ratio"])
    if params.get("gamma") is not None:
        return params["gamma"]
    if params.get("gamma0") is not None:
        return params["gamma0"]
    raise DomainError("one of --gamma, --gamma-ratio or --gamma0 is required")


def build_medium(params: dict, settings=None) -> MediumSpec:
    spec = MediumSpec.create(
        settings=settings, geometry=params["geometry"], response=params["response"],
        gamma=_resolve_gamma(params), modes=params["modes"], length_ratio=params.get("length_ratio"),
        tau_dwell=params.get("tau_dwell"),
    )
    if params.get("omega_c") is not None:
        check_linear_regime(spec, params["omega_c"])
    return spec


def resolve_occupation(params: dict, spec: Optional[MediumSpec]) -> float:
    """--f wins over --x; without either, complete inversion for amplifiers and one photon per mode for absorbers."""
    if params.get("occupation") is not None:
        return params["occupation"]
    if params.get("x") is not None:
        if spec is None:
            raise DomainError("--x needs a medium (--gamma and --response) to fix the sign of f")
        return effective_occupation(spec, params["x"])
    if spec is None:
        return 1.0
    return -1.0 if spec.is_amplifying else 1.0


def build_detection(params: dict, spec: MediumSpec) -> DetectionConfig:
    band = params["band"]
    if band == "narrow":
        band_fields = {"kind": "narrow", "delta_omega": params.get("delta_omega")}
    elif band == "lorentzian":
        band_fields = {"kind": "lorentzian", "width": params.get("width"), "gamma0": params.get("gamma0")}
    else:
        band_fields = {"kind": "step", "omega_c": params.get("omega_c")}
    return DetectionConfig.create(efficiency=params["alpha"], count_time=params.get("count_time"),
                                  band=band_fields, coverage=params["coverage"],
                                  occupation=resolve_occupation(params, spec))


def _grid(params: dict) -> np.ndarray:
    low, high, points = params["sweep_min"], params["sweep_max"], params["points"]
    if low is None or high is None:
        raise DomainError("--sweep needs --min and --max")
    if points < 2:
        raise DomainError(f"a sweep needs at least 2 points, got {points}")
    if params["scale"] == "log":
        if low <= 0.0:
            raise DomainError("a log sweep needs --min > 0")
        return np.geomspace(low, high, points)
    return np.linspace(low, high, points)


# --- Subcommands ---

def cmd_density(run: RunConfig) -> int:
    params = run.parameters
    settings = get_settings()
    spec = build_medium({**params, "response": "absorbing"}, settings)
    check_large_n(spec)
    rho = density_for(spec.geometry.value, spec.modes, spec.gamma, weak=params["weak"])
    target = dual_density(rho) if params["dual"] else rho

    # sigma = lo + width sin^2(theta) on an even theta grid crowds the support edges
    lo, hi = rho.support
    theta = (np.arange(params["points"]) + 0.5) / params["points"] * 0.5 * math.pi
    sigma = lo + (hi - lo) * np.sin(theta) ** 2
    if params["dual"]:
        sigma = np.sort(1.0 / sigma)
    frame = pd.DataFrame({"sigma": sigma, "rho": target(sigma)})
    header = provenance_header("density", params, labels=[target.provenance], seed=run.seed)
    header["support"] = f"{target.sigma_min:.12g},{target.sigma_max:.12g}"
    write_table(frame, header, run.output, run.fmt)
    return 0


def _stats_point(params: dict, settings) -> dict:
    spec = build_medium(params, settings)
    cfg = build_detection(params, spec)
    if params["band"] == "lorentzian":
        return broadband_stats(spec, cfg, c1=params["c1"], settings=settings)
    return closed_form_narrowband(spec, cfg, settings)


def cmd_stats(run: RunConfig) -> int:
    params = run.parameters
    settings = get_settings()
    name = params["sweep"]
    grid = _grid(params) if name else [None]

    def evaluate(value):
        point = dict(params)
        if name:
            point[name] = float(value)
            if name == "gamma":
                point["gamma_ratio"] = None
        try:
            summary = _stats_point(point, settings)
        except ThresholdError as exc:
            logger.info(f"{name}={value}: excluded ({exc})")
            return None
        return summary

    with ThreadPoolExecutor(max_workers=settings.threads) as pool:
        summaries = list(pool.map(evaluate, grid))

    rows, labels = [], []
    for value, summary in zip(grid, summaries):
        row = {name: value} if name else {}
        if summary is None:
            row.update(mean=math.nan, variance=math.nan, nu=math.nan, nu_eff=math.nan, nu_ratio=math.nan)
        else:
            labels.append(summary.label)
            row.update(mean=summary.mean, variance=summary.variance, nu=summary.nu,
                       nu_eff=summary.nu_eff, nu_ratio=summary.nu_ratio)
        rows.append(row)
    frame = pd.DataFrame(rows)
    header = provenance_header("stats", params, labels=labels, seed=run.seed)
    write_table(frame, header, run.output, run.fmt)
    return 0


def _numeric_distribution(params: dict, settings) -> tuple:
    spec = build_medium(params, settings)
    cfg = build_detection(params, spec)
    check_large_n(spec)
    rho = density_for(spec.geometry.value, spec.modes, spec.gamma, amplifying=spec.is_amplifying)
    gf = generating_long_time(rho, cfg, settings)
    dist = invert_generating(gf, params["n_max"], settings)
    extra = {}
    if spec.geometry is Geometry.WAVEGUIDE_SEMI_INFINITE and not spec.is_amplifying and cfg.alpha_f > 0.0:
        # weak-absorption comparison with Glauber's distribution at nu_eff = 2 nu sqrt(gamma)
        kappa = 2.0 * cfg.nu(spec.modes) * math.sqrt(spec.gamma)
        glauber = pmf_bessel_k(0.5 * kappa * cfg.alpha_f, kappa, cfg.alpha_f, params["n_max"], settings)
        extra["glauber_sup_deviation"] = float(np.max(np.abs(dist.pmf - glauber.pmf)) / np.max(glauber.pmf))
    return dist, [gf.label], extra


def cmd_pmf(run: RunConfig) -> int:
    params = run.parameters
    settings = get_settings()
    family = params["family"]
    n_max = params["n_max"]
    spec = build_medium(params, settings) if params.get("x") is not None else None
    alpha_f = params["alpha"] * resolve_occupation(params, spec)
    extra = {}
    if family == "negative-binomial":
        if params.get("nu") is None:
            raise DomainError("--family negative-binomial needs --nu")
        mean = params["mean"] if params.get("mean") is not None else params["nu"] * alpha_f
        dist, labels = pmf_negative_binomial(mean, params["nu"], n_max, settings), ["negative-binomial"]
    elif family == "poisson":
        if params.get("mean") is None:
            raise DomainError("--family poisson needs --mean")
        dist, labels = pmf_poisson(params["mean"], n_max, settings), ["poisson"]
    elif family == "glauber":
        if params.get("kappa") is None:
            raise DomainError("--family glauber needs --kappa")
        kappa = params["kappa"]
        dist, labels = pmf_bessel_k(0.5 * kappa * alpha_f, kappa, alpha_f, n_max, settings), ["glauber"]
    else:
        dist, labels, extra = _numeric_distribution(params, settings)

    moments = moments_from_pmf(dist, 2)
    frame = pd.DataFrame({"n": dist.counts, "p": dist.pmf})
    header = provenance_header("pmf", params, labels=labels, seed=run.seed)
    header.update(family=dist.family.value, mean=repr(moments.mean), variance=repr(moments.variance),
                  nu_eff=repr(moments.nu_eff), tail_mass=repr(dist.tail_mass))
    header.update({k: repr(v) for k, v in extra.items()})
    write_table(frame, header, run.output, run.fmt)
    return 0


def _histogram_frame(empirical, analytic: Optional[StrengthDensity]) -> pd.DataFrame:
    lows, highs = empirical.edges[:-1], empirical.edges[1:]
    frame = pd.DataFrame({"sigma_lo": lows, "sigma_hi": highs, "count": empirical.counts,
                          "density": empirical.density, "error": empirical.errors})
    if analytic is not None:
        frame["analytic"] = [analytic.mass_between(a, b) / (b - a) for a, b in zip(lows, highs)]
    return frame


def _support_for_histogram(analytic: StrengthDensity, values: np.ndarray) -> tuple:
    lo = analytic.sigma_min
    hi = analytic.sigma_max if not analytic.divergent else float(values.max())
    pad = 0.01 * (hi - lo)
    return lo - pad, hi + pad


def cmd_montecarlo(run: RunConfig) -> int:
    params = run.parameters
    settings = get_settings()
    if params["samples"] < 1000:
        raise DomainError(f"--samples must be >= 1000, got {params['samples']}")
    modes, gamma = params["modes"], params["gamma"]
    header_extra = {}

    if params["ensemble"] == "cavity":
        cfg = EnsembleConfig.create(modes=modes, gamma=gamma, barrier=params["barrier"],
                                    symmetry=params["symmetry"], samples=params["samples"],
                                    seed=run.seed, bins=params["bins"])
        samples = sample_cavity_strengths(cfg)
        header_extra["fictitious_modes"] = cfg.fictitious_modes
        analytic = rho_cavity_full(modes, gamma) if gamma > 0.0 else None
    else:
        if params["calibrate"]:
            calibration = calibrate_reflector(modes, delta=params["delta"], seed=run.seed)
            header_extra.update(c_r=repr(calibration.c_r), calibration_passed=calibration.passed)
            if not calibration.passed:
                raise MonteCarloError(f"Ohm's-law calibration failed: deviations {calibration.deviations}")
            c_r = calibration.c_r
        else:
            c_r = None
        result = sample_waveguide_strengths(modes, params["length_ratio"], gamma, params["delta"],
                                            params["samples"], run.seed, params["semi_infinite"], c_r=c_r,
                                            symmetry=Symmetry(params["symmetry"]), ks_tol=params["ks_tol"],
                                            absorption_coefficient=params["absorption_coefficient"])
        samples = result.samples
        header_extra["stationary_length_ratio"] = result.length_ratio
        analytic = rho_waveguide_semiinf(modes, gamma) if params["semi_infinite"] else None

    check_absorbing(samples)
    header_extra["absorptivity"] = repr(absorptivity(pooled_strengths(samples)))
    if params["dual"]:
        samples = [dual_amplifying(s) for s in samples]
        analytic = dual_density(analytic) if analytic is not None else None

    passed = True
    if analytic is None:
        values = pooled_strengths(samples)
        if gamma == 0.0:
            passed = bool(np.max(np.abs(values - 1.0)) < 1e-10)
        empirical = empirical_density(samples, params["bins"], (float(values.min()), float(values.max()) + 1e-12))
    else:
        support = _support_for_histogram(analytic, pooled_strengths(samples))
        empirical = empirical_density(samples, params["bins"], support)
        report = compare(empirical, analytic, settings=settings)
        passed = report.passes(params["alpha_level"])
        header_extra.update(chi_square=repr(report.chi_square), dof=report.dof, p_value=repr(report.p_value))
        header_extra.update({f"delta_m{p}": repr(v) for p, v in report.moment_deltas.items()})

    header_extra["passed"] = passed
    labels = [samples[0].provenance] + ([analytic.provenance] if analytic is not None else [])
    header = provenance_header("montecarlo", params, labels=labels, seed=run.seed)
    header.update(header_extra)
    write_table(_histogram_frame(empirical, analytic), header, run.output, run.fmt)
    if params["strengths"]:
        write_table(strengths_table(samples), header, params["strengths"], "csv")
    if not passed:
        raise MonteCarloError("Monte Carlo histogram does not match the analytic density")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = parse_args(argv)
    except RanlaseError as exc:
        print(f"ranlase: error: {exc}", file=sys.stderr)
        return exc.exit_code

    configure_logging(args.log_level, args.log_file)
    run = RunConfig.from_args(args)
    exit_code = 0
    try:
        exit_code = args.handler(run)
    except RanlaseError as exc:
        logger.error(f"{run.command} failed: {exc}")
        print(f"ranlase: error: {exc}", file=sys.stderr)
        exit_code = exc.exit_code
    except KeyboardInterrupt:
        logger.info("Interrupted by user.")
        exit_code = 1
    except Exception as exc:
        logger.critical(f"{run.command} crashed with an unexpected error: {exc}", exc_info=True)
        exit_code = 1
    finally:
        logger.debug(f"Exiting with code {exit_code}.")
    return exit_code


if __name__ == "__main__":
    sys.exit(main())
