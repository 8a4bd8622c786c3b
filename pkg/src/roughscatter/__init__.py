"""Scattering by rough surfaces: DtN-coupled finite elements, explicit stability
constants, and a Nyström solver for the half-space boundary integral equation."""

from . import bie, bounds, dtn, geometry, greens, media, variational, verify
from .errors import HypothesisError, RoughScatterError, SolverError

__version__ = "0.1.0"

__all__ = [
    "bie",
    "bounds",
    "dtn",
    "geometry",
    "greens",
    "media",
    "variational",
    "verify",
    "HypothesisError",
    "RoughScatterError",
    "SolverError",
]
