"""Compound mixed renewal risk models, their change of measure to compound
mixed Poisson models, and the resulting ruin and premium calculations."""

from . import diagnostics, dist, model, premium, presets, ruin, tilt
from .model import RiskModel, simulate_batch, simulate_path
from .tilt import Tilt, log_density, validate_tilt

__version__ = "0.1.0"

__all__ = [
    "RiskModel",
    "Tilt",
    "diagnostics",
    "dist",
    "log_density",
    "model",
    "premium",
    "presets",
    "ruin",
    "simulate_batch",
    "simulate_path",
    "tilt",
    "validate_tilt",
]
