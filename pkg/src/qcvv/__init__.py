"""Simulated quantum characterization, verification and validation toolkit."""

__version__ = "0.1.0"

from .errors import ConvergenceError, ValidationError

__all__ = ["ConvergenceError", "ValidationError", "__version__"]
