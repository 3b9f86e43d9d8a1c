"""Ergodic secrecy rate of artificial-noise-aided, RIS-assisted massive MIMO
downlinks under correlated Rayleigh fading: closed-form evaluation,
power/phase optimization and Monte Carlo validation."""

__version__ = "0.1.0"

from .analysis import SecrecyEval, secrecy_closed_form
from .channel import ChannelStats, PathLossSet, PhaseVector, SystemDims
from .errors import (ConfigError, DimensionError, DomainError, GeometryError, NotPSDError,
                     NumericalError, RissecError)
from .mc import McEstimate, run_montecarlo
from .optimize import OptimizerState, alternating_optimize, optimal_power_fraction

__all__ = [
    "__version__", "SecrecyEval", "secrecy_closed_form", "ChannelStats", "PathLossSet",
    "PhaseVector", "SystemDims", "ConfigError", "DimensionError", "DomainError",
    "GeometryError", "NotPSDError", "NumericalError", "RissecError", "McEstimate",
    "run_montecarlo", "OptimizerState", "alternating_optimize", "optimal_power_fraction",
]
