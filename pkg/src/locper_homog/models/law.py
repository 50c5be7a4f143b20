"""
Homogenized constitutive laws x -> (S_r,hom(x), C_hom(x)).

Every law evaluates vectorised over points and returns raw arrays
(N, n, n) and (N, n, n, n, n). Records hold the sampled values in plain
Voigt form so that export and re-import reproduce them bit for bit.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.spatial import cKDTree

from .tensor import (
    Tensor2,
    Tensor4,
    array_to_voigt_matrix,
    array_to_voigt_vector,
    voigt_matrix_to_array,
    voigt_vector_to_array,
)
from shared.logging_config import get_logger

logger = get_logger(__name__)

LawArrays = Tuple[np.ndarray, np.ndarray]


@dataclass(frozen=True)
class LawRecord:
    """One sampled law value."""

    point: Tuple[float, ...]
    H: Tuple[Tuple[float, ...], ...]
    K: Tuple[Tuple[float, ...], ...]
    residual_voigt: Tuple[float, ...]
    stiffness_voigt: Tuple[Tuple[float, ...], ...]

    @property
    def n(self) -> int:
        return len(self.point)

    @property
    def residual(self) -> Tensor2:
        return Tensor2(voigt_vector_to_array(np.array(self.residual_voigt), self.n))

    @property
    def stiffness(self) -> Tensor4:
        return Tensor4(voigt_matrix_to_array(np.array(self.stiffness_voigt), self.n))

    @classmethod
    def from_arrays(cls, point: np.ndarray, H: np.ndarray, K: np.ndarray,
                    residual: np.ndarray, stiffness: np.ndarray) -> "LawRecord":
        n = len(point)
        return cls(
            point=tuple(float(v) for v in point),
            H=tuple(tuple(float(v) for v in row) for row in H),
            K=tuple(tuple(float(v) for v in row) for row in K),
            residual_voigt=tuple(float(v) for v in array_to_voigt_vector(residual, n)),
            stiffness_voigt=tuple(tuple(float(v) for v in row) for row in array_to_voigt_matrix(stiffness, n)),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "x": list(self.point),
            "H": [list(r) for r in self.H],
            "K": [list(r) for r in self.K],
            "S_r_hom": list(self.residual_voigt),
            "C_hom": [list(r) for r in self.stiffness_voigt],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LawRecord":
        return cls(
            point=tuple(float(v) for v in data["x"]),
            H=tuple(tuple(float(v) for v in r) for r in data["H"]),
            K=tuple(tuple(float(v) for v in r) for r in data["K"]),
            residual_voigt=tuple(float(v) for v in data["S_r_hom"]),
            stiffness_voigt=tuple(tuple(float(v) for v in r) for r in data["C_hom"]),
        )


class EffectiveLaw(ABC):
    """Base class for homogenized laws."""

    strategy = "abstract"

    def __init__(self, n: int, records: Optional[Sequence[LawRecord]] = None,
                 metadata: Optional[Dict[str, Any]] = None):
        self.n = n
        self.records: List[LawRecord] = list(records or [])
        self.metadata: Dict[str, Any] = dict(metadata or {})

    @abstractmethod
    def evaluate(self, points: np.ndarray) -> LawArrays:
        """Residual stresses (N, n, n) and stiffnesses (N, n, n, n, n) at points (N, n)."""

    def at(self, x: Sequence[float]) -> Tuple[Tensor2, Tensor4]:
        residual, stiffness = self.evaluate(np.asarray(x, dtype=float).reshape(1, self.n))
        return Tensor2(residual[0]), Tensor4(stiffness[0])

    def stress(self, E: np.ndarray, points: np.ndarray) -> np.ndarray:
        """S_r,hom(x) + C_hom(x)[E] for strains (N, n, n) or one strain (n, n)."""
        residual, stiffness = self.evaluate(points)
        strain = np.asarray(E, dtype=float)
        if strain.ndim == 2:
            strain = np.broadcast_to(strain, residual.shape)
        return residual + np.einsum("pijkl,pkl->pij", stiffness, strain)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "strategy": self.strategy,
            "n": self.n,
            "records": [r.to_dict() for r in self.records],
            "metadata": self.metadata,
        }

    def __repr__(self) -> str:
        return f"<{type(self).__name__}(n={self.n}, records={len(self.records)})>"


class TableLaw(EffectiveLaw):
    """Multilinear interpolation of sampled Voigt components on a tensor grid in x."""

    strategy = "table"

    def __init__(self, n: int, axes: Sequence[Sequence[float]], residual_voigt: np.ndarray,
                 stiffness_voigt: np.ndarray, records: Optional[Sequence[LawRecord]] = None,
                 metadata: Optional[Dict[str, Any]] = None):
        super().__init__(n, records, metadata)
        self.axes = [np.asarray(a, dtype=float) for a in axes]
        grid_shape = tuple(len(a) for a in self.axes)
        s = n * (n + 1) // 2
        self.residual_voigt = np.asarray(residual_voigt, dtype=float).reshape(grid_shape + (s,))
        self.stiffness_voigt = np.asarray(stiffness_voigt, dtype=float).reshape(grid_shape + (s, s))
        stacked = np.concatenate([self.residual_voigt, self.stiffness_voigt.reshape(grid_shape + (s * s,))],
                                 axis=-1)
        self._interpolator = RegularGridInterpolator(self.axes, stacked, method="linear")
        self._lower = np.array([a[0] for a in self.axes])
        self._upper = np.array([a[-1] for a in self.axes])
        self.extrapolated_points = 0

    def evaluate(self, points: np.ndarray) -> LawArrays:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        clipped = np.clip(pts, self._lower, self._upper)
        outside = int(np.count_nonzero(np.any(clipped != pts, axis=1)))
        if outside:
            self.extrapolated_points += outside
            logger.warning(f"{outside} law queries outside the sample hull were clamped")
        values = self._interpolator(clipped)
        s = self.n * (self.n + 1) // 2
        residual = voigt_vector_to_array(values[:, :s], self.n)
        stiffness = voigt_matrix_to_array(values[:, s:].reshape(-1, s, s), self.n)
        return residual, stiffness

    def to_dict(self) -> Dict[str, Any]:
        data = super().to_dict()
        data["grid"] = [a.tolist() for a in self.axes]
        return data


class FastPathLaw(EffectiveLaw):
    """Law for H = K: one canonical tensor transported along K.

    C_hom(x) = pushforward(C_hom(x0), K_x K_x0^-1); residuals come from the
    supplied provider, which receives the K values (N, n, n).
    """

    strategy = "fast_path"

    def __init__(self, n: int, base_point: np.ndarray, base_K: np.ndarray, base_stiffness: np.ndarray,
                 K_field: Callable[[np.ndarray], np.ndarray],
                 residual_provider: Callable[[np.ndarray], np.ndarray],
                 records: Optional[Sequence[LawRecord]] = None, metadata: Optional[Dict[str, Any]] = None):
        super().__init__(n, records, metadata)
        self.base_point = np.asarray(base_point, dtype=float)
        self.base_K = np.asarray(base_K, dtype=float)
        self.base_K_inv = np.linalg.inv(self.base_K)
        self.base_stiffness = np.asarray(base_stiffness, dtype=float)
        self.K_field = K_field
        self.residual_provider = residual_provider

    def evaluate(self, points: np.ndarray) -> LawArrays:
        # Imported here to avoid a circular import
        from ..services.tensor_core import transform_array

        pts = np.atleast_2d(np.asarray(points, dtype=float))
        K = self.K_field(pts).reshape(-1, self.n, self.n)
        transport = K @ self.base_K_inv
        stiffness = transform_array(self.base_stiffness, transport)
        return self.residual_provider(K), stiffness

    def to_dict(self) -> Dict[str, Any]:
        data = super().to_dict()
        describe = getattr(self.K_field, "to_dict", None)
        residuals = getattr(self.residual_provider, "to_dict", None)
        data["fast_path"] = {
            "base_point": self.base_point.tolist(),
            "base_K": self.base_K.tolist(),
            "base_stiffness": self.base_stiffness.tolist(),
            "K_field": describe() if describe is not None else None,
            "residuals": residuals() if residuals is not None else None,
        }
        return data


class PointwiseLaw(EffectiveLaw):
    """Exact cell solves at every query point, through a caching provider."""

    strategy = "pointwise"

    def __init__(self, n: int, provider: Callable[[np.ndarray], LawArrays],
                 records: Optional[Sequence[LawRecord]] = None, metadata: Optional[Dict[str, Any]] = None):
        super().__init__(n, records, metadata)
        self.provider = provider

    def evaluate(self, points: np.ndarray) -> LawArrays:
        return self.provider(np.atleast_2d(np.asarray(points, dtype=float)))


class SampledLaw(EffectiveLaw):
    """Imported records without a grid; queries take the nearest record."""

    strategy = "sampled"

    def __init__(self, n: int, records: Sequence[LawRecord], metadata: Optional[Dict[str, Any]] = None):
        super().__init__(n, records, metadata)
        if not self.records:
            raise ValueError("a sampled law needs at least one record")
        self._tree = cKDTree(np.array([r.point for r in self.records]))
        self._residual = np.array([voigt_vector_to_array(np.array(r.residual_voigt), n) for r in self.records])
        self._stiffness = np.array([voigt_matrix_to_array(np.array(r.stiffness_voigt), n) for r in self.records])

    def evaluate(self, points: np.ndarray) -> LawArrays:
        _, index = self._tree.query(np.atleast_2d(np.asarray(points, dtype=float)))
        return self._residual[index], self._stiffness[index]
