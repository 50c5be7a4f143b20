"""
Reference data for trilinear (bilinear in 2D) hexahedral elements, and boxes.

Local nodes are ordered lexicographically by their corner offsets, the last
coordinate varying fastest, which matches C-order raveling of the node grid.
"""

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Dict

import numpy as np

_GAUSS_1D = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])


@dataclass(frozen=True)
class Q1Reference:
    """Shape data on the unit reference cube [0, 1]^n."""

    n: int
    offsets: np.ndarray  # (2^n, n) corner offsets in {0, 1}
    gauss_points: np.ndarray  # (G, n)
    gauss_weights: np.ndarray  # (G,), sums to one
    shape_values: np.ndarray  # (G, 2^n)
    shape_gradients: np.ndarray  # (G, 2^n, n) with respect to reference coordinates
    center_gradients: np.ndarray  # (2^n, n) at the element centre

    @property
    def nodes_per_element(self) -> int:
        return self.offsets.shape[0]

    def values_at(self, xi: np.ndarray) -> np.ndarray:
        """Shape function values at reference points xi (P, n) -> (P, 2^n)."""
        xi = np.atleast_2d(xi)
        factors = np.where(self.offsets[None, :, :] == 1, xi[:, None, :], 1.0 - xi[:, None, :])
        return np.prod(factors, axis=2)

    def gradients_at(self, xi: np.ndarray) -> np.ndarray:
        """Reference gradients at xi (P, n) -> (P, 2^n, n)."""
        xi = np.atleast_2d(xi)
        factors = np.where(self.offsets[None, :, :] == 1, xi[:, None, :], 1.0 - xi[:, None, :])
        signs = np.where(self.offsets == 1, 1.0, -1.0)
        grads = np.empty((xi.shape[0], self.nodes_per_element, self.n))
        for d in range(self.n):
            others = np.delete(factors, d, axis=2)
            grads[:, :, d] = signs[None, :, d] * np.prod(others, axis=2)
        return grads


@lru_cache(maxsize=None)
def q1_reference(n: int) -> Q1Reference:
    """Build (and cache) the Q1 reference element in dimension n."""
    offsets = np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.int64)
    points = np.array(list(itertools.product(_GAUSS_1D, repeat=n)))
    weights = np.full(points.shape[0], 1.0 / points.shape[0])
    reference = Q1Reference(n, offsets, points, weights, np.empty(0), np.empty(0), np.empty(0))
    values = reference.values_at(points)
    gradients = reference.gradients_at(points)
    center = reference.gradients_at(np.full((1, n), 0.5))[0]
    for array in (offsets, points, weights, values, gradients, center):
        array.setflags(write=False)
    return Q1Reference(n, offsets, points, weights, values, gradients, center)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box [lower, upper] in R^n."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self) -> None:
        lower = np.array(self.lower, dtype=float)
        upper = np.array(self.upper, dtype=float)
        if lower.shape != upper.shape or lower.ndim != 1 or lower.size not in (2, 3):
            raise ValueError("box corners must be vectors of length 2 or 3")
        if np.any(upper <= lower):
            raise ValueError("box upper corner must exceed the lower corner")
        lower.setflags(write=False)
        upper.setflags(write=False)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Box":
        return cls(np.asarray(data["lower"]), np.asarray(data["upper"]))

    @classmethod
    def unit(cls, n: int) -> "Box":
        return cls(np.zeros(n), np.ones(n))

    @property
    def n(self) -> int:
        return self.lower.size

    @property
    def extent(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def volume(self) -> float:
        return float(np.prod(self.extent))

    def contains(self, points: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        pts = np.atleast_2d(points)
        slack = tol * max(1.0, float(np.max(np.abs(self.extent))))
        return np.all((pts >= self.lower - slack) & (pts <= self.upper + slack), axis=1)

    def to_dict(self) -> Dict[str, Any]:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}
