"""Objective perturbation for private convex learning: accounting, solvers and risk bounds."""

from objpert.errors import CalibrationError, DomainError, NonConvergenceError

__version__ = "0.1.0"

__all__ = ["CalibrationError", "DomainError", "NonConvergenceError", "__version__"]
