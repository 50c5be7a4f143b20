"""
Periodic cell mesh and phase-assigned cell material.
"""

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np

from ..exceptions import CoercivityError, ConfigError, DimensionMismatchError, SymmetryError
from .grid import Q1Reference, q1_reference
from .tensor import Tensor4


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class CellMesh:
    """Uniform Q1 mesh of the unit cell Y = (0,1)^n with m elements per edge.

    Nodes on opposite faces are identified, so the canonical nodes are the
    m^n grid points with multi-index in [0, m)^n, raveled in C order. Elements
    are raveled the same way, element (e_1, ..., e_n) covering
    [e_1 h, (e_1 + 1) h] x ... with h = 1/m.
    """

    n: int
    m: int
    reference: Q1Reference = field(init=False, repr=False)
    element_nodes: np.ndarray = field(init=False, repr=False)
    element_dofs: np.ndarray = field(init=False, repr=False)
    element_centroids: np.ndarray = field(init=False, repr=False)
    node_coordinates: np.ndarray = field(init=False, repr=False)
    periodic_map: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.n not in (2, 3):
            raise DimensionMismatchError(f"cell dimension must be 2 or 3, got {self.n}")
        if isinstance(self.m, bool) or not isinstance(self.m, (int, np.integer)) or self.m < 2:
            raise ConfigError(f"cell resolution must be an integer of at least 2, got {self.m!r}")
        ref = q1_reference(self.n)
        shape = (self.m,) * self.n
        element_index = np.array(np.unravel_index(np.arange(self.m ** self.n), shape)).T
        corners = (element_index[:, None, :] + ref.offsets[None, :, :]) % self.m
        nodes = np.ravel_multi_index(tuple(np.moveaxis(corners, 2, 0)), shape)
        dofs = (nodes[:, :, None] * self.n + np.arange(self.n)[None, None, :]).reshape(nodes.shape[0], -1)
        full_shape = (self.m + 1,) * self.n
        full_index = np.array(np.unravel_index(np.arange((self.m + 1) ** self.n), full_shape)).T
        periodic = np.ravel_multi_index(tuple((full_index % self.m).T), shape)
        object.__setattr__(self, "reference", ref)
        object.__setattr__(self, "element_nodes", _readonly(nodes))
        object.__setattr__(self, "element_dofs", _readonly(dofs))
        object.__setattr__(self, "element_centroids", _readonly((element_index + 0.5) * self.h))
        object.__setattr__(self, "node_coordinates", _readonly(element_index * self.h))
        object.__setattr__(self, "periodic_map", _readonly(periodic))

    @property
    def h(self) -> float:
        return 1.0 / self.m

    @property
    def num_nodes(self) -> int:
        return self.m ** self.n

    @property
    def num_elements(self) -> int:
        return self.m ** self.n

    @property
    def num_dofs(self) -> int:
        return self.num_nodes * self.n

    @property
    def element_volume(self) -> float:
        return self.h ** self.n

    @property
    def element_volumes(self) -> np.ndarray:
        return np.full(self.num_elements, self.element_volume)

    @property
    def shape_gradients(self) -> np.ndarray:
        """Physical shape gradients at Gauss points (G, 2^n, n)."""
        return self.reference.shape_gradients / self.h

    @property
    def center_gradients(self) -> np.ndarray:
        return self.reference.center_gradients / self.h

    def full_node_id(self, canonical: int) -> int:
        """Id of a canonical node within the (m+1)^n grid that includes the upper faces."""
        index = np.unravel_index(canonical, (self.m,) * self.n)
        return int(np.ravel_multi_index(index, (self.m + 1,) * self.n))

    def to_dict(self) -> Dict[str, Any]:
        return {"n": self.n, "m": self.m, "nodes": self.num_nodes, "elements": self.num_elements}

    def __repr__(self) -> str:
        return f"<CellMesh(n={self.n}, m={self.m})>"


@dataclass(frozen=True)
class Phase:
    """A material phase: stiffness plus an optional residual generator."""

    name: str
    stiffness: Tensor4
    residual_generator: Optional[Callable[..., np.ndarray]] = None

    def __post_init__(self) -> None:
        from ..services.tensor_core import check_symmetries, coercivity_constant, st_venant_generator

        report = check_symmetries(self.stiffness)
        if not (report.minor and report.major):
            raise SymmetryError(f"phase '{self.name}' stiffness lacks symmetry "
                                f"(violation {report.max_violation:.3e})")
        if coercivity_constant(self.stiffness) <= 0.0:
            raise CoercivityError(f"phase '{self.name}' stiffness is not coercive")
        if self.residual_generator is None:
            object.__setattr__(self, "residual_generator", st_venant_generator(self.stiffness))

    @property
    def n(self) -> int:
        return self.stiffness.n

    @property
    def residual_is_position_dependent(self) -> bool:
        return bool(getattr(self.residual_generator, "position_dependent", True))

    @property
    def residual_is_stress_free(self) -> bool:
        """True when the generator vanishes at C = 1."""
        return bool(getattr(self.residual_generator, "stress_free", False))


@dataclass(frozen=True)
class CellMaterial:
    """Phases assigned to the elements of a cell mesh."""

    mesh: CellMesh
    phases: Tuple[Phase, ...]
    phase_ids: np.ndarray
    geometry: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        ids = np.array(self.phase_ids, dtype=np.int64)
        if ids.shape != (self.mesh.num_elements,):
            raise DimensionMismatchError(
                f"expected {self.mesh.num_elements} phase ids, got {ids.shape}")
        if ids.min() < 0 or ids.max() >= len(self.phases):
            raise ValueError("phase ids out of range")
        for phase in self.phases:
            if phase.n != self.mesh.n:
                raise DimensionMismatchError(f"phase '{phase.name}' is {phase.n}D, mesh is {self.mesh.n}D")
        object.__setattr__(self, "phases", tuple(self.phases))
        object.__setattr__(self, "phase_ids", _readonly(ids))

    @property
    def n(self) -> int:
        return self.mesh.n

    @property
    def stiffness_stack(self) -> np.ndarray:
        """Phase stiffness arrays stacked (P, n, n, n, n)."""
        return np.stack([p.stiffness.entries for p in self.phases])

    @property
    def volume_fractions(self) -> np.ndarray:
        counts = np.bincount(self.phase_ids, minlength=len(self.phases))
        return counts / self.mesh.num_elements

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mesh": self.mesh.to_dict(),
            "phases": [p.name for p in self.phases],
            "volume_fractions": self.volume_fractions.tolist(),
            "geometry": {k: v for k, v in self.geometry.items() if k != "phases"},
        }

    def __repr__(self) -> str:
        return f"<CellMaterial(mesh={self.mesh!r}, phases={[p.name for p in self.phases]})>"
