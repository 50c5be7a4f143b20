"""
Second- and fourth-order tensor value types.

Both types wrap read-only numpy arrays and validate shape and finiteness on
construction. Voigt component order is 11, 22, 12 in 2D and
11, 22, 33, 23, 13, 12 in 3D. Plain Voigt (unweighted) is used for storage;
Mandel weighting (sqrt(2) on shear slots) is used for spectral work.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

import numpy as np

from ..exceptions import DimensionMismatchError, SingularTransformError, SymmetryError

SUPPORTED_DIMENSIONS = (2, 3)

VOIGT_PAIRS: Dict[int, Tuple[Tuple[int, int], ...]] = {
    2: ((0, 0), (1, 1), (0, 1)),
    3: ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)),
}

VOIGT_LABELS: Dict[int, Tuple[str, ...]] = {
    2: ("11", "22", "12"),
    3: ("11", "22", "33", "23", "13", "12"),
}

DEFAULT_TOLERANCE = 1e-12


def voigt_size(n: int) -> int:
    return n * (n + 1) // 2


def mandel_weights(n: int) -> np.ndarray:
    return np.array([1.0 if i == j else np.sqrt(2.0) for i, j in VOIGT_PAIRS[n]])


def _frozen(array: Any, shape_rank: int, name: str) -> np.ndarray:
    arr = np.array(array, dtype=float)
    if arr.ndim != shape_rank or len(set(arr.shape)) != 1:
        raise DimensionMismatchError(f"{name} must be a square array of rank {shape_rank}, got shape {arr.shape}")
    if arr.shape[0] not in SUPPORTED_DIMENSIONS:
        raise DimensionMismatchError(f"{name} dimension must be 2 or 3, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


def _scale(arr: np.ndarray) -> float:
    return max(1.0, float(np.max(np.abs(arr)))) if arr.size else 1.0


@dataclass(frozen=True)
class Tensor2:
    """Linear map on R^n stored as an n x n matrix."""

    entries: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", _frozen(self.entries, 2, "Tensor2"))

    @classmethod
    def identity(cls, n: int) -> "Tensor2":
        return cls(np.eye(n))

    @classmethod
    def zeros(cls, n: int) -> "Tensor2":
        return cls(np.zeros((n, n)))

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def T(self) -> "Tensor2":
        return Tensor2(self.entries.T)

    def __matmul__(self, other: "Tensor2") -> "Tensor2":
        if other.n != self.n:
            raise DimensionMismatchError(f"cannot compose {self.n}x{self.n} with {other.n}x{other.n}")
        return Tensor2(self.entries @ other.entries)

    def __add__(self, other: "Tensor2") -> "Tensor2":
        return Tensor2(self.entries + other.entries)

    def __sub__(self, other: "Tensor2") -> "Tensor2":
        return Tensor2(self.entries - other.entries)

    def __mul__(self, scalar: float) -> "Tensor2":
        return Tensor2(self.entries * scalar)

    __rmul__ = __mul__

    def sym(self) -> "Tensor2":
        return Tensor2(0.5 * (self.entries + self.entries.T))

    def skew(self) -> "Tensor2":
        return Tensor2(0.5 * (self.entries - self.entries.T))

    def det(self) -> float:
        return float(np.linalg.det(self.entries))

    def inv(self) -> "Tensor2":
        if not self.is_invertible():
            raise SingularTransformError(f"matrix is singular (cond={self.condition_number():.3e})")
        return Tensor2(np.linalg.inv(self.entries))

    def norm(self) -> float:
        return float(np.linalg.norm(self.entries))

    def condition_number(self) -> float:
        return float(np.linalg.cond(self.entries))

    def is_symmetric(self, tol: float = DEFAULT_TOLERANCE) -> bool:
        return float(np.max(np.abs(self.entries - self.entries.T))) <= tol * _scale(self.entries)

    def is_orthogonal(self, tol: float = DEFAULT_TOLERANCE) -> bool:
        defect = self.entries.T @ self.entries - np.eye(self.n)
        return float(np.max(np.abs(defect))) <= tol * _scale(self.entries) ** 2

    def is_invertible(self, tol: float = DEFAULT_TOLERANCE) -> bool:
        cond = self.condition_number()
        return bool(np.isfinite(cond) and cond * tol < 1.0)

    def allclose(self, other: "Tensor2", rtol: float = 1e-12) -> bool:
        scale = max(_scale(self.entries), _scale(other.entries))
        return float(np.max(np.abs(self.entries - other.entries))) <= rtol * scale

    def to_voigt(self, mandel: bool = False) -> np.ndarray:
        """Symmetric part in Voigt order; Mandel scales the shear slots by sqrt(2)."""
        s = 0.5 * (self.entries + self.entries.T)
        vec = np.array([s[i, j] for i, j in VOIGT_PAIRS[self.n]])
        return vec * mandel_weights(self.n) if mandel else vec

    @classmethod
    def from_voigt(cls, vector: Any, n: int, mandel: bool = False) -> "Tensor2":
        vec = np.asarray(vector, dtype=float)
        if vec.shape != (voigt_size(n),):
            raise DimensionMismatchError(f"expected {voigt_size(n)} Voigt components, got {vec.shape}")
        if mandel:
            vec = vec / mandel_weights(n)
        out = np.zeros((n, n))
        for value, (i, j) in zip(vec, VOIGT_PAIRS[n]):
            out[i, j] = value
            out[j, i] = value
        return cls(out)

    def to_dict(self) -> Dict[str, Any]:
        return {"n": self.n, "entries": self.entries.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Tensor2":
        tensor = cls(data["entries"])
        if "n" in data and int(data["n"]) != tensor.n:
            raise DimensionMismatchError(f"declared n={data['n']} but entries are {tensor.n}x{tensor.n}")
        return tensor

    def __repr__(self) -> str:
        return f"<Tensor2(n={self.n}, entries={self.entries.tolist()})>"


@dataclass(frozen=True)
class Tensor4:
    """Linear map on n x n matrices, entries indexed (i, j, k, l) with T[E]_ij = T_ijkl E_kl."""

    entries: np.ndarray
    has_minor_symmetry: bool = field(init=False)
    has_major_symmetry: bool = field(init=False)

    def __post_init__(self) -> None:
        arr = _frozen(self.entries, 4, "Tensor4")
        object.__setattr__(self, "entries", arr)
        tol = 1e-10 * _scale(arr)
        minor = (np.max(np.abs(arr - arr.transpose(1, 0, 2, 3))) <= tol
                 and np.max(np.abs(arr - arr.transpose(0, 1, 3, 2))) <= tol)
        major = np.max(np.abs(arr - arr.transpose(2, 3, 0, 1))) <= tol
        object.__setattr__(self, "has_minor_symmetry", bool(minor))
        object.__setattr__(self, "has_major_symmetry", bool(major))

    @classmethod
    def zeros(cls, n: int) -> "Tensor4":
        return cls(np.zeros((n, n, n, n)))

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def apply(self, strain: Tensor2) -> Tensor2:
        if strain.n != self.n:
            raise DimensionMismatchError(f"cannot apply a {self.n}D tensor to a {strain.n}D strain")
        return Tensor2(np.einsum("ijkl,kl->ij", self.entries, strain.entries))

    __call__ = apply

    def __add__(self, other: "Tensor4") -> "Tensor4":
        return Tensor4(self.entries + other.entries)

    def __sub__(self, other: "Tensor4") -> "Tensor4":
        return Tensor4(self.entries - other.entries)

    def __mul__(self, scalar: float) -> "Tensor4":
        return Tensor4(self.entries * scalar)

    __rmul__ = __mul__

    def norm(self) -> float:
        return float(np.linalg.norm(self.entries))

    def allclose(self, other: "Tensor4", rtol: float = 1e-12) -> bool:
        scale = max(_scale(self.entries), _scale(other.entries))
        return float(np.max(np.abs(self.entries - other.entries))) <= rtol * scale

    def to_voigt(self, mandel: bool = False) -> np.ndarray:
        if not self.has_minor_symmetry:
            raise SymmetryError("Voigt representation requires minor symmetry")
        pairs = VOIGT_PAIRS[self.n]
        matrix = np.array([[self.entries[i, j, k, l] for k, l in pairs] for i, j in pairs])
        if mandel:
            w = mandel_weights(self.n)
            matrix = matrix * np.outer(w, w)
        return matrix

    @classmethod
    def from_voigt(cls, matrix: Any, n: int, mandel: bool = False) -> "Tensor4":
        mat = np.asarray(matrix, dtype=float)
        size = voigt_size(n)
        if mat.shape != (size, size):
            raise DimensionMismatchError(f"expected a {size}x{size} Voigt matrix, got {mat.shape}")
        return cls(voigt_matrix_to_array(mat, n, mandel))

    def to_dict(self) -> Dict[str, Any]:
        return {"n": self.n, "index_order": "ijkl", "entries": self.entries.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Tensor4":
        if "voigt" in data:
            return cls.from_voigt(data["voigt"], int(data["n"]))
        return cls(data["entries"])

    def __repr__(self) -> str:
        return (f"<Tensor4(n={self.n}, minor={self.has_minor_symmetry}, "
                f"major={self.has_major_symmetry})>")


def voigt_matrix_to_array(matrix: np.ndarray, n: int, mandel: bool = False) -> np.ndarray:
    """Expand Voigt matrices (..., s, s) to full fourth-order arrays (..., n, n, n, n)."""
    matrix = np.asarray(matrix, dtype=float)
    if mandel:
        w = mandel_weights(n)
        matrix = matrix / np.outer(w, w)
    out = np.zeros(matrix.shape[:-2] + (n, n, n, n))
    pairs = VOIGT_PAIRS[n]
    for a, (i, j) in enumerate(pairs):
        for b, (k, l) in enumerate(pairs):
            value = matrix[..., a, b]
            for p, q in {(i, j), (j, i)}:
                for r, s in {(k, l), (l, k)}:
                    out[..., p, q, r, s] = value
    return out


def array_to_voigt_matrix(array: np.ndarray, n: int) -> np.ndarray:
    """Plain Voigt matrices (..., s, s) from fourth-order arrays (..., n, n, n, n)."""
    pairs = VOIGT_PAIRS[n]
    rows = [np.stack([array[..., i, j, k, l] for k, l in pairs], axis=-1) for i, j in pairs]
    return np.stack(rows, axis=-2)


def array_to_voigt_vector(array: np.ndarray, n: int) -> np.ndarray:
    """Plain Voigt vectors (..., s) from symmetric second-order arrays (..., n, n)."""
    sym = 0.5 * (array + np.swapaxes(array, -1, -2))
    return np.stack([sym[..., i, j] for i, j in VOIGT_PAIRS[n]], axis=-1)


def voigt_vector_to_array(vector: np.ndarray, n: int) -> np.ndarray:
    vector = np.asarray(vector, dtype=float)
    out = np.zeros(vector.shape[:-1] + (n, n))
    for a, (i, j) in enumerate(VOIGT_PAIRS[n]):
        out[..., i, j] = vector[..., a]
        out[..., j, i] = vector[..., a]
    return out


def voigt_labels(prefix: str, n: int) -> List[str]:
    return [f"{prefix}{label}" for label in VOIGT_LABELS[n]]
