# config.py
import os
import logging
from logging.handlers import RotatingFileHandler
from pathlib import Path

from dotenv import load_dotenv
from pydantic import BaseModel, Field

# Load environment variables from .env file
load_dotenv()

logger = logging.getLogger(__name__)


def _env_float(name: str, default: float) -> float:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return float(raw)
    except ValueError:
        logger.error(f"Environment variable {name}={raw!r} is not a number.")
        raise ValueError(f"{name} must be numeric, got {raw!r}")


def _env_int(name: str, default: int) -> int:
    value = _env_float(name, default)
    if value != int(value) or value < 1:
        logger.error(f"Environment variable {name}={value!r} is not a positive integer.")
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


# --- Logging Configuration ---
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO").upper()
LOG_FILE_PATH = os.getenv("LOG_FILE", "logs/ranlase.log")
LOG_MAX_BYTES = _env_int("LOG_MAX_BYTES", 10 * 1024 * 1024)
LOG_BACKUP_COUNT = _env_int("LOG_BACKUP_COUNT", 5)
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

# --- Worker Configuration ---
RANLASE_THREADS = _env_int("RANLASE_THREADS", os.cpu_count() or 1)

# --- Regime Guards ---
# delta_omega * t must reach this value before long-time formulas apply
LONG_TIME_MIN = _env_float("RANLASE_LONG_TIME_MIN", 10.0)
# Omega_c * t must stay below this value for short-time formulas
SHORT_TIME_MAX = _env_float("RANLASE_SHORT_TIME_MAX", 0.1)
# gamma <= gamma_c - THRESHOLD_MARGIN for amplifying media
THRESHOLD_MARGIN = _env_float("RANLASE_THRESHOLD_MARGIN", 1e-6)
# weak-absorption cavity density and finite-waveguide closed forms
WEAK_GUARD = _env_float("RANLASE_WEAK_GUARD", 0.1)

# --- Numerics ---
TAIL_TOL = _env_float("RANLASE_TAIL_TOL", 1e-8)
NEG_FLOOR = _env_float("RANLASE_NEG_FLOOR", 1e-12)
QUAD_EPSREL = _env_float("RANLASE_QUAD_EPSREL", 1e-11)
QUAD_LIMIT = _env_int("RANLASE_QUAD_LIMIT", 400)


class Settings(BaseModel):
    """Per-call snapshot of the tunable guards; defaults come from the environment."""

    long_time_min: float = Field(default=LONG_TIME_MIN, gt=0)
    short_time_max: float = Field(default=SHORT_TIME_MAX, gt=0)
    threshold_margin: float = Field(default=THRESHOLD_MARGIN, ge=0)
    weak_guard: float = Field(default=WEAK_GUARD, gt=0)
    tail_tol: float = Field(default=TAIL_TOL, gt=0)
    neg_floor: float = Field(default=NEG_FLOOR, ge=0)
    quad_epsrel: float = Field(default=QUAD_EPSREL, gt=0)
    quad_limit: int = Field(default=QUAD_LIMIT, ge=10)
    threads: int = Field(default=RANLASE_THREADS, ge=1)


def get_settings(**overrides) -> Settings:
    """Return the environment-derived settings, optionally overridden."""
    return Settings(**overrides)


def configure_logging(level: str = None, log_file: str = None) -> logging.Logger:
    """
    Configure the root logger with a console handler and, unless disabled,
    a rotating file handler. Only the command-line entry point calls this;
    library modules just create their own named loggers.
    """
    level = (level or LOG_LEVEL).upper()
    log_file = LOG_FILE_PATH if log_file is None else log_file

    root_logger = logging.getLogger()
    root_logger.setLevel(getattr(logging, level, logging.INFO))

    log_formatter = logging.Formatter(LOG_FORMAT)

    # Remove existing handlers to avoid duplication if called twice
    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)

    console_handler = logging.StreamHandler()
    console_handler.setFormatter(log_formatter)
    root_logger.addHandler(console_handler)

    if log_file:
        path = Path(log_file)
        path.parent.mkdir(parents=True, exist_ok=True)
        file_handler = RotatingFileHandler(
            path,
            maxBytes=LOG_MAX_BYTES,
            backupCount=LOG_BACKUP_COUNT
        )
        file_handler.setFormatter(log_formatter)
        root_logger.addHandler(file_handler)
        logger.info(f"Logging to console and to file: {log_file} (Level: {level}, MaxSize: {LOG_MAX_BYTES}B, Backups: {LOG_BACKUP_COUNT})")
    else:
        logger.info(f"Logging to console only (Level: {level})")

    return root_logger
