"""Constant mean curvature half-tubes condensing on closed minimal curves of a domain boundary."""
from __future__ import annotations

from .approx import CorrectorSet, corrector_scheme, residual_orders
from .config import RunConfig, load_config
from .errors import CmcTubeError, ConvergenceError, RefusalError, ValidationError
from .geometry import find_closed_geodesic, make_geometry
from .solve import nonlinear_solve, verify_solution
from .spectral import FormFamily, find_gap_intervals
from .tube import make_context

__version__ = "0.1.0"

__all__ = [
    "CorrectorSet",
    "corrector_scheme",
    "residual_orders",
    "RunConfig",
    "load_config",
    "CmcTubeError",
    "ConvergenceError",
    "RefusalError",
    "ValidationError",
    "find_closed_geodesic",
    "make_geometry",
    "nonlinear_solve",
    "verify_solution",
    "FormFamily",
    "find_gap_intervals",
    "make_context",
]
