"""
Cell problem solver.

For a frame (H, K) the cell problem seeks a periodic, zero-mean w on Y with

    integral grad(v) . B grad(w) = - integral grad(v) . P    for all periodic v,

where B = pushforward(C_phase, H^-1 K) is the stiffness seen in cell
coordinates and P = H^-1 sigma H^-T is the element-wise constant forcing
(sigma = S(C, K)[E] for strain correctors, the pushed-forward residual
generator for residual correctors). The operator is singular on constants,
so CG runs on the zero-mean subspace through a projection with a projected
Jacobi preconditioner. A direct option pins one node and removes the mean
afterwards.
"""

import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.sparse.linalg import LinearOperator, cg, splu

from ..exceptions import ConfigError, DimensionMismatchError, SolverError
from ..models.cell import CellMaterial
from ..models.corrector import CorrectorField, zero_corrector
from ..models.tensor import Tensor2, voigt_labels, array_to_voigt_vector
from .tensor_core import transform_array
from shared.config import get_config
from shared.logging_config import get_logger, log_solver_run

logger = get_logger(__name__)

SOLVER_METHODS = ("cg", "direct")
NEGLIGIBLE_FORCING = 1e-13


@dataclass(frozen=True)
class SolverSettings:
    method: str = "cg"
    rtol: float = 1e-10
    maxiter: Optional[int] = None
    cache_quantum: float = 1e-12

    def __post_init__(self) -> None:
        if self.method not in SOLVER_METHODS:
            raise ConfigError(f"solver method must be one of {SOLVER_METHODS}, got '{self.method}'")
        if not 0.0 < self.rtol < 1.0:
            raise ConfigError(f"solver rtol must lie in (0, 1), got {self.rtol}")
        if self.maxiter is not None and self.maxiter <= 0:
            raise ConfigError("solver maxiter must be positive")
        if self.cache_quantum <= 0.0:
            raise ConfigError("cache_quantum must be positive")

    @classmethod
    def from_config(cls, config: Optional[Dict[str, Any]] = None) -> "SolverSettings":
        section = (config or get_config()).get("solver", {})
        return cls(
            method=str(section.get("method", "cg")),
            rtol=float(section.get("rtol", 1e-10)),
            maxiter=None if section.get("maxiter") is None else int(section["maxiter"]),
            cache_quantum=float(section.get("cache_quantum", 1e-12)),
        )


@dataclass
class CellOperator:
    """Assembled cell stiffness for one (H, K) pair."""

    H: np.ndarray
    K: np.ndarray
    H_inv: np.ndarray
    matrix: sparse.csr_matrix
    diagonal: np.ndarray
    frame_tensors: np.ndarray  # (P, n, n, n, n) stiffness in cell coordinates
    stress_tensors: np.ndarray  # (P, n, n, n, n) pushforward of phase stiffness by K
    _factor: Any = field(default=None, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def num_dofs(self) -> int:
        return self.matrix.shape[0]

    def factor(self, n: int) -> Any:
        """LU factor of the matrix with the first node pinned."""
        with self._lock:
            if self._factor is None:
                free = np.arange(n, self.num_dofs)
                reduced = self.matrix[free][:, free].tocsc()
                self._factor = splu(reduced)
            return self._factor


def _as_array(matrix: Any, n: int, name: str) -> np.ndarray:
    arr = matrix.entries if isinstance(matrix, Tensor2) else np.asarray(matrix, dtype=float)
    if arr.shape != (n, n):
        raise DimensionMismatchError(f"{name} must be {n}x{n}, got {arr.shape}")
    return arr


class CellSolver:
    """Cell problems for one material, with operators cached by quantized (H, K)."""

    def __init__(self, material: CellMaterial, settings: Optional[SolverSettings] = None):
        self.material = material
        self.mesh = material.mesh
        self.settings = settings or SolverSettings.from_config()
        self.counters: Counter = Counter()
        self._cache: Dict[Tuple[int, ...], CellOperator] = {}
        self._lock = threading.Lock()
        ref = self.mesh.reference
        # Integrated products of shape gradients, shared by every phase
        self._gradient_products = self.mesh.element_volume * np.einsum(
            "g,gaj,gbl->ajbl", ref.gauss_weights, self.mesh.shape_gradients, self.mesh.shape_gradients
        )

    def cache_key(self, H: np.ndarray, K: np.ndarray) -> Tuple[int, ...]:
        stacked = np.concatenate([H.ravel(), K.ravel()]) / self.settings.cache_quantum
        return tuple(np.round(stacked).astype(np.int64).tolist())

    def _count(self, name: str) -> None:
        with self._lock:
            self.counters[name] += 1

    def assemble_cell_operator(self, H: Any, K: Any) -> CellOperator:
        """Assemble (or fetch from cache) the cell operator for (H, K)."""
        n = self.mesh.n
        H = _as_array(H, n, "H")
        K = _as_array(K, n, "K")
        key = self.cache_key(H, K)
        with self._lock:
            cached = self._cache.get(key)
        if cached is not None:
            return cached

        H_inv = Tensor2(H).inv().entries
        stiffness = self.material.stiffness_stack
        frame = transform_array(stiffness, H_inv @ K)
        stress = transform_array(stiffness, K)

        nd = self.mesh.element_dofs.shape[1]
        local = np.einsum("pijkl,ajbl->paibk", frame, self._gradient_products)
        local = local.reshape(len(self.material.phases), nd, nd)
        data = local[self.material.phase_ids].ravel()
        edof = self.mesh.element_dofs
        rows = np.repeat(edof, nd, axis=1).ravel()
        cols = np.tile(edof, (1, nd)).ravel()
        size = self.mesh.num_dofs
        matrix = sparse.coo_matrix((data, (rows, cols)), shape=(size, size)).tocsr()
        matrix = (0.5 * (matrix + matrix.T)).tocsr()

        operator = CellOperator(H=H.copy(), K=K.copy(), H_inv=H_inv, matrix=matrix,
                                diagonal=matrix.diagonal(), frame_tensors=frame,
                                stress_tensors=stress)
        with self._lock:
            operator = self._cache.setdefault(key, operator)
            self.counters["assemblies"] += 1
        logger.debug(f"Assembled cell operator ({size} dofs, nnz={matrix.nnz})")
        return operator

    def forcing(self, flux: np.ndarray) -> np.ndarray:
        """Load vector -integral grad(v) . P for element-wise constant P (E, n, n)."""
        fe = -self.mesh.element_volume * np.einsum("aj,eij->eai", self.mesh.center_gradients, flux)
        return np.bincount(self.mesh.element_dofs.ravel(), weights=fe.reshape(fe.shape[0], -1).ravel(),
                           minlength=self.mesh.num_dofs)

    def _project(self, x: np.ndarray) -> np.ndarray:
        values = x.reshape(-1, self.mesh.n)
        return (values - values.mean(axis=0)).ravel()

    def _solve(self, operator: CellOperator, flux: np.ndarray, kind: str,
               parameters: Dict[str, Any]) -> CorrectorField:
        start = time.perf_counter()
        n = self.mesh.n
        b = self.forcing(flux)

        compatibility = np.abs(b.reshape(-1, n).sum(axis=0)).max()
        scale = float(np.abs(b).sum()) or 1.0
        if compatibility > 1e-8 * scale:
            raise SolverError(f"cell forcing is not compatible with periodicity ({compatibility:.3e})")
        b = self._project(b)

        if np.max(np.abs(b)) <= NEGLIGIBLE_FORCING * float(operator.diagonal.max()) * self.mesh.h:
            log_solver_run(kind, operator.num_dofs, 0, 0.0, time.perf_counter() - start, shortcut="zero_forcing")
            return zero_corrector(self.mesh, kind, parameters)

        if self.settings.method == "direct":
            x = np.zeros(operator.num_dofs)
            x[n:] = operator.factor(n).solve(b[n:])
            x = self._project(x)
            iterations = 1
        else:
            x, iterations = self._conjugate_gradient(operator, b)

        residual = b - self._project(operator.matrix @ x)
        relative = float(np.linalg.norm(residual) / np.linalg.norm(b))
        if relative > max(100.0 * self.settings.rtol, 1e-12):
            raise SolverError(f"{kind} cell solve reached relative residual {relative:.3e}",
                              residual=relative, iterations=iterations)

        duration = time.perf_counter() - start
        log_solver_run(kind, operator.num_dofs, iterations, relative, duration, method=self.settings.method)
        return CorrectorField(self.mesh, x.reshape(-1, n), kind, parameters, iterations, relative)

    def _conjugate_gradient(self, operator: CellOperator, b: np.ndarray) -> Tuple[np.ndarray, int]:
        size = operator.num_dofs
        inverse_diagonal = 1.0 / operator.diagonal
        A = LinearOperator((size, size), matvec=lambda x: self._project(operator.matrix @ self._project(x)),
                           dtype=float)
        M = LinearOperator((size, size), matvec=lambda r: self._project(inverse_diagonal * self._project(r)),
                           dtype=float)
        iterations = [0]

        def count(_: np.ndarray) -> None:
            iterations[0] += 1

        maxiter = self.settings.maxiter or 10 * size
        x, info = cg(A, b, rtol=self.settings.rtol, atol=0.0, maxiter=maxiter, M=M, callback=count)
        if info > 0:
            residual = float(np.linalg.norm(b - A @ x) / np.linalg.norm(b))
            raise SolverError(f"CG did not converge in {iterations[0]} iterations (residual {residual:.3e})",
                              residual=residual, iterations=iterations[0])
        if info < 0:
            raise SolverError("CG breakdown on the cell operator", iterations=iterations[0])
        return self._project(x), iterations[0]

    def residual_generator_field(self, K: Any) -> np.ndarray:
        """Generator values S(K^T K, y_e) at element centroids (E, n, n)."""
        n = self.mesh.n
        K = _as_array(K, n, "K")
        cauchy_green = K.T @ K
        values = np.empty((self.mesh.num_elements, n, n))
        centroids = self.mesh.element_centroids
        for p, phase in enumerate(self.material.phases):
            elements = np.flatnonzero(self.material.phase_ids == p)
            if elements.size == 0:
                continue
            if phase.residual_is_position_dependent:
                values[elements] = [phase.residual_generator(cauchy_green, centroids[e]) for e in elements]
            else:
                values[elements] = phase.residual_generator(cauchy_green, centroids[elements[0]])
        return values

    def pushed_residual_field(self, K: Any) -> np.ndarray:
        """Pushforward K S(K^T K, y_e) K^T per element."""
        K = _as_array(K, self.mesh.n, "K")
        return np.einsum("ia,eab,jb->eij", K, self.residual_generator_field(K), K)

    def solve_corrector_E(self, H: Any, K: Any, E: Any) -> CorrectorField:
        """Strain corrector w^E for frame (H, K)."""
        n = self.mesh.n
        operator = self.assemble_cell_operator(H, K)
        E = _as_array(E, n, "E")
        E_sym = 0.5 * (E + E.T)
        sigma = np.einsum("pijkl,kl->pij", operator.stress_tensors, E_sym)[self.material.phase_ids]
        flux = np.einsum("ia,eab,jb->eij", operator.H_inv, sigma, operator.H_inv)
        self._count("strain")
        return self._solve(operator, flux, "strain", {"H": operator.H.tolist(), "K": operator.K.tolist(),
                                                      "E": E.tolist()})

    def solve_corrector_residual(self, H: Any, K: Any) -> CorrectorField:
        """Residual corrector w^0 for frame (H, K)."""
        operator = self.assemble_cell_operator(H, K)
        sigma = self.pushed_residual_field(operator.K)
        flux = np.einsum("ia,eab,jb->eij", operator.H_inv, sigma, operator.H_inv)
        self._count("residual")
        return self._solve(operator, flux, "residual", {"H": operator.H.tolist(), "K": operator.K.tolist()})

    def solve_corrector_canonical(self, E: Any) -> CorrectorField:
        """Classical corrector with H = K = 1; reusable for every K when H = K."""
        n = self.mesh.n
        operator = self.assemble_cell_operator(np.eye(n), np.eye(n))
        E = _as_array(E, n, "E")
        E_sym = 0.5 * (E + E.T)
        flux = np.einsum("pijkl,kl->pij", operator.stress_tensors, E_sym)[self.material.phase_ids]
        self._count("canonical")
        return self._solve(operator, flux, "canonical", {"E": E.tolist()})

    def solve_residual_K(self, K: Any) -> CorrectorField:
        """Residual corrector for H = K, posed with the plain phase stiffness."""
        n = self.mesh.n
        operator = self.assemble_cell_operator(np.eye(n), np.eye(n))
        K = _as_array(K, n, "K")
        flux = self.residual_generator_field(K)
        self._count("residual_K")
        return self._solve(operator, flux, "residual_K", {"K": K.tolist()})

    def cell_strain(self, corrector: CorrectorField, H: Any, E: Any) -> np.ndarray:
        """Total strain E + sym(H^-T grad(w) H^-1) at element centroids (E, n, n)."""
        n = self.mesh.n
        H_inv = np.linalg.inv(_as_array(H, n, "H"))
        E = _as_array(E, n, "E")
        grad = corrector.gradient_at_centroids()
        pulled = np.einsum("ai,eab,bj->eij", H_inv, grad, H_inv)
        return 0.5 * (E + E.T) + 0.5 * (pulled + np.swapaxes(pulled, 1, 2))


def assemble_cell_operator(material: CellMaterial, H: Any, K: Any) -> CellOperator:
    return CellSolver(material).assemble_cell_operator(H, K)


def solve_corrector_E(material: CellMaterial, H: Any, K: Any, E: Any) -> CorrectorField:
    return CellSolver(material).solve_corrector_E(H, K, E)


def solve_corrector_residual(material: CellMaterial, H: Any, K: Any) -> CorrectorField:
    return CellSolver(material).solve_corrector_residual(H, K)


def solve_corrector_canonical(material: CellMaterial, E: Any) -> CorrectorField:
    return CellSolver(material).solve_corrector_canonical(E)


def solve_residual_K(material: CellMaterial, K: Any) -> CorrectorField:
    return CellSolver(material).solve_residual_K(K)


def two_scale_corrector(corrector: CorrectorField, H: Any, ybar: np.ndarray) -> np.ndarray:
    """Physical-frame corrector H^-T w(ybar) at cell points (P, n)."""
    H_inv = np.linalg.inv(_as_array(H, corrector.n, "H"))
    return corrector.evaluate(ybar) @ H_inv


def export_strain_csv(solver: CellSolver, corrector: CorrectorField, H: Any, E: Any, path: Path,
                      float_format: str = "%.12e") -> Path:
    """Write centroid strains in Voigt order, one row per element."""
    n = solver.mesh.n
    strain = solver.cell_strain(corrector, H, E)
    frame = pd.DataFrame(solver.mesh.element_centroids, columns=[f"y{i + 1}" for i in range(n)])
    frame["phase"] = solver.material.phase_ids
    voigt = pd.DataFrame(array_to_voigt_vector(strain, n), columns=voigt_labels("eps", n))
    frame = pd.concat([frame, voigt], axis=1)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=float_format, lineterminator="\n")
    return path
