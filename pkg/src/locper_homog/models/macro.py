"""
Macroscopic mesh, boundary-value problem and displacement field.
"""

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional, Sequence, Union

import numpy as np

from ..exceptions import ConfigError, DomainError
from .grid import Box, Q1Reference, q1_reference
from .law import EffectiveLaw

VectorField = Callable[[np.ndarray], np.ndarray]
VECTOR_FIELD_TYPES = ("zero", "constant", "linear", "sine")


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class MacroMesh:
    """Structured Q1 mesh of a box with ``counts`` elements per axis (non-periodic)."""

    box: Box
    counts: Sequence[int]
    reference: Q1Reference = field(init=False, repr=False)
    element_nodes: np.ndarray = field(init=False, repr=False)
    element_dofs: np.ndarray = field(init=False, repr=False)
    element_index: np.ndarray = field(init=False, repr=False)
    node_coordinates: np.ndarray = field(init=False, repr=False)
    boundary_nodes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        counts = np.array(self.counts, dtype=np.int64).reshape(-1)
        if counts.size == 1:
            counts = np.repeat(counts, self.box.n)
        if counts.size != self.box.n or np.any(counts < 2):
            raise ConfigError(f"macro resolution needs at least 2 elements per axis, got {counts.tolist()}")
        n = self.box.n
        ref = q1_reference(n)
        node_shape = tuple(counts + 1)
        element_index = np.array(np.unravel_index(np.arange(int(np.prod(counts))), tuple(counts))).T
        corners = element_index[:, None, :] + ref.offsets[None, :, :]
        nodes = np.ravel_multi_index(tuple(np.moveaxis(corners, 2, 0)), node_shape)
        dofs = (nodes[:, :, None] * n + np.arange(n)[None, None, :]).reshape(nodes.shape[0], -1)
        node_index = np.array(np.unravel_index(np.arange(int(np.prod(node_shape))), node_shape)).T
        h = self.box.extent / counts
        boundary = np.any((node_index == 0) | (node_index == counts), axis=1)
        object.__setattr__(self, "counts", _readonly(counts))
        object.__setattr__(self, "reference", ref)
        object.__setattr__(self, "element_nodes", _readonly(nodes))
        object.__setattr__(self, "element_dofs", _readonly(dofs))
        object.__setattr__(self, "element_index", _readonly(element_index))
        object.__setattr__(self, "node_coordinates", _readonly(self.box.lower + node_index * h))
        object.__setattr__(self, "boundary_nodes", _readonly(boundary))

    @property
    def n(self) -> int:
        return self.box.n

    @property
    def h(self) -> np.ndarray:
        return self.box.extent / self.counts

    @property
    def num_nodes(self) -> int:
        return self.node_coordinates.shape[0]

    @property
    def num_elements(self) -> int:
        return self.element_nodes.shape[0]

    @property
    def num_dofs(self) -> int:
        return self.num_nodes * self.n

    @property
    def element_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def shape_gradients(self) -> np.ndarray:
        """Physical shape gradients at Gauss points (G, 2^n, n)."""
        return self.reference.shape_gradients / self.h

    @property
    def center_gradients(self) -> np.ndarray:
        return self.reference.center_gradients / self.h

    @property
    def element_centroids(self) -> np.ndarray:
        return self.box.lower + (self.element_index + 0.5) * self.h

    def gauss_points(self) -> np.ndarray:
        """Physical Gauss points (E, G, n)."""
        local = self.element_index[:, None, :] + self.reference.gauss_points[None, :, :]
        return self.box.lower + local * self.h

    def quadrature_weights(self) -> np.ndarray:
        """Weights (E, G) for the Gauss points."""
        return np.broadcast_to(self.element_volume * self.reference.gauss_weights,
                               (self.num_elements, self.reference.gauss_weights.size))

    def locate(self, points: np.ndarray) -> Any:
        """Element ids and reference coordinates for points in the box."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        inside = self.box.contains(pts, tol=1e-9)
        if not np.all(inside):
            raise DomainError(f"point {pts[~inside][0].tolist()} lies outside the mesh box")
        scaled = (pts - self.box.lower) / self.h
        index = np.clip(np.floor(scaled).astype(np.int64), 0, self.counts - 1)
        element = np.ravel_multi_index(tuple(index.T), tuple(self.counts))
        return element, np.clip(scaled - index, 0.0, 1.0)

    def to_dict(self) -> Dict[str, Any]:
        return {"box": self.box.to_dict(), "counts": self.counts.tolist()}

    def __repr__(self) -> str:
        return f"<MacroMesh(counts={self.counts.tolist()}, box={self.box.to_dict()})>"


def make_vector_field(descriptor: Optional[Dict[str, Any]], n: int) -> VectorField:
    """Boundary data and body forces from descriptors.

    {"type": "zero"}, {"type": "constant", "value": [...]},
    {"type": "linear", "matrix": [[...]], "offset": [...]},
    {"type": "sine", "amplitude": [...], "wavenumber": [...]} -> amplitude * prod_d sin(pi k_d x_d)
    """
    descriptor = descriptor or {"type": "zero"}
    kind = descriptor.get("type", "zero")
    if kind == "zero":
        return lambda pts: np.zeros((np.atleast_2d(pts).shape[0], n))
    if kind == "constant":
        value = np.asarray(descriptor["value"], dtype=float).reshape(n)
        return lambda pts: np.broadcast_to(value, (np.atleast_2d(pts).shape[0], n)).copy()
    if kind == "linear":
        matrix = np.asarray(descriptor["matrix"], dtype=float).reshape(n, n)
        offset = np.asarray(descriptor.get("offset", [0.0] * n), dtype=float).reshape(n)
        return lambda pts: np.atleast_2d(pts) @ matrix.T + offset
    if kind == "sine":
        amplitude = np.asarray(descriptor.get("amplitude", [1.0] * n), dtype=float).reshape(n)
        wavenumber = np.asarray(descriptor.get("wavenumber", [1.0] * n), dtype=float).reshape(n)
        return lambda pts: np.prod(np.sin(np.pi * wavenumber * np.atleast_2d(pts)), axis=1)[:, None] * amplitude
    raise ConfigError(f"unknown vector field type '{kind}', expected one of {VECTOR_FIELD_TYPES}")


@dataclass
class MacroProblem:
    """Dirichlet problem -div(S + C grad u) = b on the mesh box, u = u_D on its boundary."""

    mesh: MacroMesh
    boundary: VectorField
    body_force: VectorField
    law: Optional[EffectiveLaw] = None
    include_residual: bool = True
    descriptors: Dict[str, Any] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.mesh.n


@dataclass(frozen=True)
class DisplacementField:
    """Nodal Q1 displacements on a macro mesh."""

    mesh: MacroMesh
    values: np.ndarray
    residual_norm: float = 0.0
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float).reshape(self.mesh.num_nodes, self.mesh.n)
        object.__setattr__(self, "values", _readonly(values))

    @property
    def n(self) -> int:
        return self.mesh.n

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        element, xi = self.mesh.locate(points)
        shape = self.mesh.reference.values_at(xi)
        return np.einsum("pa,pai->pi", shape, self.values[self.mesh.element_nodes[element]])

    def gradient(self, points: np.ndarray) -> np.ndarray:
        """Gradients (P, n, n) with entry [p, i, j] = du_i / dx_j."""
        element, xi = self.mesh.locate(points)
        grads = self.mesh.reference.gradients_at(xi) / self.mesh.h
        return np.einsum("pai,paj->pij", self.values[self.mesh.element_nodes[element]], grads)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.evaluate(points)

    def to_dict(self) -> Dict[str, Any]:
        return {"mesh": self.mesh.to_dict(), "residual_norm": self.residual_norm, "metadata": self.metadata}

    def __repr__(self) -> str:
        return f"<DisplacementField(mesh={self.mesh!r}, max={float(np.max(np.abs(self.values))):.3e})>"


FieldLike = Union[DisplacementField, VectorField]
