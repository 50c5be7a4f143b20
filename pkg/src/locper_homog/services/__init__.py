"""
Services for the homogenization toolkit.
"""

from .cell_solver import CellSolver, SolverSettings
from .micro_synth import MicroField
from .fem_macro import ConvergenceSetup

__all__ = [
    "CellSolver",
    "SolverSettings",
    "MicroField",
    "ConvergenceSetup",
]
