"""
Tensor algebra for elasticity under invertible linear transforms.

The central operation is the pushforward of a fourth-order tensor by an
invertible matrix A, E -> A T[A^T E A] A^T. It is linear in the tensor,
composes as pushforward(pushforward(T, A), B) == pushforward(T, B A) and
preserves minor and major symmetry.
"""

from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Mapping, Optional, Protocol, Sequence

import numpy as np

from ..exceptions import CoercivityError, DimensionMismatchError, SymmetryError
from ..models.tensor import VOIGT_PAIRS, Tensor2, Tensor4, mandel_weights
from shared.config import get_config
from shared.logging_config import get_logger

logger = get_logger(__name__)

SYMMETRY_TOLERANCE = 1e-12


def symmetry_tolerance() -> float:
    """cell.symmetry_tolerance from the application config."""
    return float(get_config().get("cell", {}).get("symmetry_tolerance", SYMMETRY_TOLERANCE))


def transform_array(tensor: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    """Vectorised pushforward on raw arrays; leading axes broadcast."""
    return np.einsum(
        "...ia,...jb,...abcd,...kc,...ld->...ijkl",
        matrix, matrix, tensor, matrix, matrix,
        optimize=True,
    )


def apply_transform_elasticity(tensor: Tensor4, matrix: Tensor2) -> Tensor4:
    """Return the tensor E -> A T[A^T E A] A^T."""
    if tensor.n != matrix.n:
        raise DimensionMismatchError(
            f"cannot transform a {tensor.n}D tensor by a {matrix.n}x{matrix.n} matrix"
        )
    return Tensor4(transform_array(tensor.entries, matrix.entries))


class ResidualGenerator(Protocol):
    """Residual stress as a function of the right Cauchy-Green tensor and cell position."""

    def __call__(self, cauchy_green: np.ndarray, ybar: np.ndarray) -> np.ndarray:
        ...


@dataclass(frozen=True)
class StVenantGenerator:
    """S(C, y) = 1/2 C_phase[C - 1], stress free under rotations."""

    stiffness: Tensor4
    position_dependent = False
    stress_free = True

    def __call__(self, cauchy_green: np.ndarray, ybar: Optional[np.ndarray] = None) -> np.ndarray:
        n = self.stiffness.n
        strain = 0.5 * (np.asarray(cauchy_green, dtype=float) - np.eye(n))
        return np.einsum("ijkl,...kl->...ij", self.stiffness.entries, strain)


def st_venant_generator(stiffness: Tensor4) -> StVenantGenerator:
    return StVenantGenerator(stiffness)


def residual_pushforward(generator: Callable[..., np.ndarray], matrix: Tensor2,
                         ybar: Optional[np.ndarray] = None) -> Tensor2:
    """Pushforward of a residual generator, A S(A^T A, y) A^T."""
    A = matrix.entries
    inner = np.asarray(generator(A.T @ A, ybar), dtype=float)
    if inner.shape != A.shape:
        raise DimensionMismatchError(f"residual generator returned shape {inner.shape}")
    return Tensor2(A @ inner @ A.T)


@dataclass(frozen=True)
class SymmetryReport:
    minor: bool
    major: bool
    max_violation: float

    def to_dict(self) -> Dict[str, Any]:
        return {"minor": self.minor, "major": self.major, "max_violation": self.max_violation}


def _lin_basis(n: int) -> List[np.ndarray]:
    basis = []
    for i in range(n):
        for j in range(n):
            e = np.zeros((n, n))
            e[i, j] = 1.0
            basis.append(e)
    return basis


def check_symmetries(tensor: Tensor4, tol: Optional[float] = None) -> SymmetryReport:
    """Test minor and major symmetry over the canonical basis of Lin; tol defaults to the config value."""
    if tol is None:
        tol = symmetry_tolerance()
    T = tensor.entries
    basis = _lin_basis(tensor.n)
    minor_violation = 0.0
    major_violation = 0.0
    for E in basis:
        TE = np.einsum("ijkl,kl->ij", T, E)
        T_symE = np.einsum("ijkl,kl->ij", T, 0.5 * (E + E.T))
        # T annihilates skew tensors and maps into Sym
        minor_violation = max(minor_violation,
                              float(np.max(np.abs(TE - T_symE))),
                              float(np.max(np.abs(TE - TE.T))))
        for D in basis:
            Ds, Es = 0.5 * (D + D.T), 0.5 * (E + E.T)
            gap = np.sum(Ds * np.einsum("ijkl,kl->ij", T, Es)) - np.sum(Es * np.einsum("ijkl,kl->ij", T, Ds))
            major_violation = max(major_violation, abs(float(gap)))
    scale = max(1.0, float(np.max(np.abs(T))))
    return SymmetryReport(
        minor=minor_violation <= tol * scale,
        major=major_violation <= tol * scale,
        max_violation=max(minor_violation, major_violation),
    )


def mandel_matrix(tensor: Tensor4) -> np.ndarray:
    """Mandel matrix of the restriction to symmetric tensors."""
    pairs = VOIGT_PAIRS[tensor.n]
    w = mandel_weights(tensor.n)
    T = tensor.entries
    return np.array([[w[a] * w[b] * T[i, j, k, l] for b, (k, l) in enumerate(pairs)]
                     for a, (i, j) in enumerate(pairs)])


def coercivity_constant(tensor: Tensor4) -> float:
    """Smallest eigenvalue of the tensor restricted to Sym."""
    report = check_symmetries(tensor)
    if not (report.minor and report.major):
        raise SymmetryError(
            f"coercivity needs minor and major symmetry (violation {report.max_violation:.3e})"
        )
    matrix = mandel_matrix(tensor)
    return float(np.linalg.eigvalsh(0.5 * (matrix + matrix.T))[0])


def make_isotropic(lam: float, mu: float, n: int) -> Tensor4:
    """C_ijkl = lam d_ij d_kl + mu (d_ik d_jl + d_il d_jk)."""
    if n not in (2, 3):
        raise DimensionMismatchError(f"dimension must be 2 or 3, got {n}")
    if mu <= 0.0 or n * lam + 2.0 * mu <= 0.0:
        raise CoercivityError(f"isotropic moduli lam={lam}, mu={mu} are not coercive in {n}D")
    d = np.eye(n)
    entries = (lam * np.einsum("ij,kl->ijkl", d, d)
               + mu * (np.einsum("ik,jl->ijkl", d, d) + np.einsum("il,jk->ijkl", d, d)))
    return Tensor4(entries)


_ORTHOTROPIC_KEYS = {
    2: ("c11", "c22", "c12", "c66"),
    3: ("c11", "c22", "c33", "c12", "c13", "c23", "c44", "c55", "c66"),
}


def orthotropic_tensor(constants: Mapping[str, float], n: int) -> Tensor4:
    """Orthotropic stiffness from Voigt stiffness constants in material axes."""
    missing = [k for k in _ORTHOTROPIC_KEYS[n] if k not in constants]
    if missing:
        raise ValueError(f"orthotropic constants missing: {', '.join(missing)}")
    c = {k: float(constants[k]) for k in _ORTHOTROPIC_KEYS[n]}
    if n == 2:
        voigt = np.array([[c["c11"], c["c12"], 0.0],
                          [c["c12"], c["c22"], 0.0],
                          [0.0, 0.0, c["c66"]]])
    else:
        voigt = np.zeros((6, 6))
        voigt[:3, :3] = [[c["c11"], c["c12"], c["c13"]],
                         [c["c12"], c["c22"], c["c23"]],
                         [c["c13"], c["c23"], c["c33"]]]
        voigt[3, 3], voigt[4, 4], voigt[5, 5] = c["c44"], c["c55"], c["c66"]
    return Tensor4.from_voigt(voigt, n)


def make_rotated_orthotropic(constants: Mapping[str, float], orientation: Tensor2) -> Tensor4:
    """Orthotropic base tensor rotated by an orthogonal orientation."""
    if not orientation.is_orthogonal(1e-10):
        raise ValueError("orientation must be an orthogonal matrix")
    base = orthotropic_tensor(constants, orientation.n)
    if coercivity_constant(base) <= 0.0:
        raise CoercivityError("orthotropic constants are not coercive")
    return apply_transform_elasticity(base, orientation)


def sym_basis(n: int) -> List[Tensor2]:
    """Frobenius-orthonormal basis of Sym in Voigt order."""
    basis = []
    for i, j in VOIGT_PAIRS[n]:
        e = np.zeros((n, n))
        if i == j:
            e[i, i] = 1.0
        else:
            e[i, j] = e[j, i] = 1.0 / np.sqrt(2.0)
        basis.append(Tensor2(e))
    return basis


def rotation(angle: float, n: int = 2, axis: int = 2) -> Tensor2:
    """Rotation by angle (radians); in 3D about the given coordinate axis."""
    c, s = np.cos(angle), np.sin(angle)
    if n == 2:
        return Tensor2([[c, -s], [s, c]])
    if n != 3:
        raise DimensionMismatchError(f"dimension must be 2 or 3, got {n}")
    p, q = [k for k in range(3) if k != axis]
    Q = np.eye(3)
    Q[p, p], Q[p, q], Q[q, p], Q[q, q] = c, -s, s, c
    return Tensor2(Q)


def tensor_from_mandel_responses(responses: Sequence[np.ndarray], n: int) -> Tensor4:
    """Assemble a tensor from its responses to the sym_basis, symmetrising the Mandel matrix."""
    basis = [b.entries for b in sym_basis(n)]
    matrix = np.array([[np.sum(basis[a] * responses[b]) for b in range(len(basis))]
                       for a in range(len(basis))])
    matrix = 0.5 * (matrix + matrix.T)
    return Tensor4.from_voigt(matrix, n, mandel=True)
