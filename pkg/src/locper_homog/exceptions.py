"""
Exception hierarchy for the homogenization toolkit.

Every error carries an ``exit_code`` so the CLI can map failures to process
exit statuses without inspecting messages.
"""

from typing import Optional


class LocperError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class ConfigError(LocperError, ValueError):
    """Invalid or inconsistent run configuration."""

    exit_code = 2


class DimensionMismatchError(LocperError, ValueError):
    """Operands have incompatible dimensions."""


class SymmetryError(LocperError, ValueError):
    """A tensor lacks a symmetry the operation requires."""


class CoercivityError(LocperError, ValueError):
    """A stiffness tensor is not positive definite on symmetric tensors."""


class SingularTransformError(LocperError, ValueError):
    """A transform field is singular or numerically ill-conditioned."""


class GeometryError(LocperError, ValueError):
    """A cell geometry descriptor cannot be realised on the mesh."""


class ResolutionError(LocperError, ValueError):
    """A mesh is too coarse for the requested scale."""

    exit_code = 2


class DomainError(LocperError, ValueError):
    """A query point lies outside the macroscopic domain."""


class SolverError(LocperError, RuntimeError):
    """A linear solve did not reach its tolerance."""

    exit_code = 3

    def __init__(self, message: str, residual: Optional[float] = None,
                 iterations: Optional[int] = None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class BudgetExceededError(LocperError, RuntimeError):
    """A workflow would exceed its resolution or time budget."""


class AcceptanceError(LocperError):
    """One or more acceptance checks failed."""

    exit_code = 4
