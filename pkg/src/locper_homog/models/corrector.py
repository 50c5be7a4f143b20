"""
Periodic corrector fields on the cell mesh.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np

from .cell import CellMesh


@dataclass(frozen=True)
class CorrectorField:
    """Nodal values (num_nodes, n) of a periodic Q1 field with zero mean."""

    mesh: CellMesh
    values: np.ndarray
    kind: str
    parameters: Dict[str, Any] = field(default_factory=dict)
    iterations: int = 0
    residual_norm: float = 0.0

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float).reshape(self.mesh.num_nodes, self.mesh.n)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.mesh.n

    def mean(self) -> np.ndarray:
        """Integral mean over Y; equals the nodal mean on a uniform periodic grid."""
        return self.values.mean(axis=0)

    def norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def gradient_at_centroids(self) -> np.ndarray:
        """Element-average gradients (E, n, n) with entry [e, i, j] = dw_i / dy_j."""
        local = self.values[self.mesh.element_nodes]  # (E, 2^n, n)
        return np.einsum("eai,aj->eij", local, self.mesh.center_gradients)

    def gradient_at_gauss_points(self) -> np.ndarray:
        """Gradients (E, G, n, n) at the element Gauss points."""
        local = self.values[self.mesh.element_nodes]
        return np.einsum("eai,gaj->egij", local, self.mesh.shape_gradients)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Interpolate at cell points (taken modulo Y)."""
        mesh = self.mesh
        ybar = np.mod(np.atleast_2d(points), 1.0) * mesh.m
        index = np.minimum(np.floor(ybar).astype(np.int64), mesh.m - 1)
        xi = ybar - index
        element = np.ravel_multi_index(tuple(index.T), (mesh.m,) * mesh.n)
        shape = mesh.reference.values_at(xi)  # (P, 2^n)
        local = self.values[mesh.element_nodes[element]]  # (P, 2^n, n)
        return np.einsum("pa,pai->pi", shape, local)

    def to_dict(self, include_values: bool = False) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "kind": self.kind,
            "mesh": self.mesh.to_dict(),
            "parameters": self.parameters,
            "iterations": self.iterations,
            "residual_norm": self.residual_norm,
        }
        if include_values:
            data["values"] = self.values.tolist()
        return data

    def __repr__(self) -> str:
        return f"<CorrectorField(kind='{self.kind}', mesh={self.mesh!r}, max={self.norm():.3e})>"


def zero_corrector(mesh: CellMesh, kind: str, parameters: Optional[Dict[str, Any]] = None) -> CorrectorField:
    return CorrectorField(mesh, np.zeros((mesh.num_nodes, mesh.n)), kind, parameters or {})
