"""Sparse-view CT toolkit: simulation, transform learning, and PWLS solvers."""

from .backends import BACKEND
from .errors import ConfigError, NumericalError

__version__ = "0.1.0"

__all__ = ["BACKEND", "ConfigError", "NumericalError", "__version__"]
