"""ranlase: photodetection statistics of thermal and amplified emission from random media."""

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "config",
    "errors",
    "medium",
    "densities",
    "photostat",
    "distributions",
    "rmt",
    "output",
    "cli",
]
