"""Numerical laboratory for boundary Harnack estimates on irregular domains."""

from . import acf, bhi, chains, config, corpus, domains, freeboundary, grid, harmonic, hypotheses, pipeline
from .errors import HarnackLabError

__all__ = [
    "acf",
    "bhi",
    "chains",
    "config",
    "corpus",
    "domains",
    "freeboundary",
    "grid",
    "harmonic",
    "hypotheses",
    "pipeline",
    "HarnackLabError",
]
__version__ = "0.1.0"
