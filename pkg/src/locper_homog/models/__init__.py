"""
Data models for the homogenization toolkit.
"""

from .tensor import Tensor2, Tensor4
from .grid import Box
from .cell import CellMaterial, CellMesh, Phase
from .corrector import CorrectorField
from .fields import TransformField
from .law import EffectiveLaw, FastPathLaw, LawRecord, PointwiseLaw, SampledLaw, TableLaw
from .macro import DisplacementField, MacroMesh, MacroProblem
from .micro import PatchDecomposition
from .report import CheckReport, ConvergenceReport
from .run_config import RunConfig

__all__ = [
    "Tensor2",
    "Tensor4",
    "Box",
    "CellMaterial",
    "CellMesh",
    "Phase",
    "CorrectorField",
    "TransformField",
    "EffectiveLaw",
    "FastPathLaw",
    "LawRecord",
    "PointwiseLaw",
    "SampledLaw",
    "TableLaw",
    "DisplacementField",
    "MacroMesh",
    "MacroProblem",
    "PatchDecomposition",
    "CheckReport",
    "ConvergenceReport",
    "RunConfig",
]
