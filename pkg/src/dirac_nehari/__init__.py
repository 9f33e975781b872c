"""Nehari-manifold reduction for strongly indefinite energies, with a spectral
solver for Dirac-geodesics on the circle."""

from .circle import CircleDomain, LoopMap, Nonlinearity, SpinorField
from .errors import (
    ChartError,
    ConfigError,
    DegenerateDirectionError,
    DimensionError,
    GridTooSmallError,
    NotPositiveDefiniteError,
    SymmetryError,
)
from .geodesic import GeodesicConfig, SolveReport, build_context, el_residual, refine_check, solve_class, total_energy
from .nehari import (
    MaximizerOptions,
    MinimizeOptions,
    ProblemContext,
    maximize_on_halfspace,
    minimize_reduced,
    reduced_energy,
    reduced_gradient,
)
from .spectral import SpectralModel, SplitVector, build_spectral_model, split, v_norm

__version__ = "0.1.0"

__all__ = [
    "ChartError",
    "CircleDomain",
    "ConfigError",
    "DegenerateDirectionError",
    "DimensionError",
    "GeodesicConfig",
    "GridTooSmallError",
    "LoopMap",
    "MaximizerOptions",
    "MinimizeOptions",
    "Nonlinearity",
    "NotPositiveDefiniteError",
    "ProblemContext",
    "SolveReport",
    "SpectralModel",
    "SpinorField",
    "SplitVector",
    "SymmetryError",
    "build_context",
    "build_spectral_model",
    "el_residual",
    "maximize_on_halfspace",
    "minimize_reduced",
    "reduced_energy",
    "reduced_gradient",
    "refine_check",
    "solve_class",
    "split",
    "total_energy",
    "v_norm",
]
