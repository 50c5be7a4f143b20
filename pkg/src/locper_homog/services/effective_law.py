"""
Effective law service: homogenized stiffness and residual stress from cell solves.

Three strategies turn the pointwise cell formulas into a law over the
macroscopic domain:

    fast_path  H = K. One set of canonical correctors serves every x and the
               stiffness is transported along K.
    table      Exact values on a tensor grid of sample points, interpolated
               multilinearly in x, with held-out check points for an error estimate.
    pointwise  Exact values wherever the law is queried, cached by (H, K).
"""

import json
import threading
from concurrent.futures import ThreadPoolExecutor
from itertools import product
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..exceptions import ConfigError, SingularTransformError
from ..models.cell import CellMaterial
from ..models.fields import TransformField, make_transform_field
from ..models.grid import Box
from ..models.law import EffectiveLaw, FastPathLaw, LawRecord, PointwiseLaw, SampledLaw, TableLaw
from ..models.tensor import Tensor2, Tensor4, voigt_labels
from .cell_solver import CellSolver
from .tensor_core import apply_transform_elasticity, mandel_matrix, sym_basis, tensor_from_mandel_responses
from shared.config import worker_count
from shared.logging_config import get_logger

logger = get_logger(__name__)

LAW_STRATEGIES = ("fast_path", "table", "pointwise")


def _solver_for(material: CellMaterial, solver: Optional[CellSolver]) -> CellSolver:
    if solver is not None and solver.material is not material:
        raise ValueError("solver was built for a different material")
    return solver or CellSolver(material)


def _pulled_gradient(gradient: np.ndarray, H_inv: np.ndarray) -> np.ndarray:
    """H^-T grad(w) H^-1 for element gradients (E, n, n)."""
    return np.einsum("ai,eab,bj->eij", H_inv, gradient, H_inv)


def _element_stiffness(solver: CellSolver, stress_tensors: np.ndarray) -> np.ndarray:
    return stress_tensors[solver.material.phase_ids]


def effective_elasticity_at(material: CellMaterial, H: Any, K: Any,
                            solver: Optional[CellSolver] = None) -> Tensor4:
    """C_hom for the frame (H, K), assembled from responses to a basis of Sym."""
    solver = _solver_for(material, solver)
    operator = solver.assemble_cell_operator(H, K)
    stiffness = _element_stiffness(solver, operator.stress_tensors)
    responses = []
    for basis in sym_basis(material.n):
        corrector = solver.solve_corrector_E(operator.H, operator.K, basis)
        strain = basis.entries + _pulled_gradient(corrector.gradient_at_centroids(), operator.H_inv)
        responses.append(np.einsum("eijkl,ekl->ij", stiffness, strain) / material.mesh.num_elements)
    return tensor_from_mandel_responses(responses, material.n)


def effective_residual_at(material: CellMaterial, H: Any, K: Any,
                          solver: Optional[CellSolver] = None) -> Tensor2:
    """S_r,hom for the frame (H, K)."""
    solver = _solver_for(material, solver)
    operator = solver.assemble_cell_operator(H, K)
    stiffness = _element_stiffness(solver, operator.stress_tensors)
    corrector = solver.solve_corrector_residual(operator.H, operator.K)
    strain = _pulled_gradient(corrector.gradient_at_centroids(), operator.H_inv)
    stress = solver.pushed_residual_field(operator.K) + np.einsum("eijkl,ekl->eij", stiffness, strain)
    average = stress.mean(axis=0)
    return Tensor2(0.5 * (average + average.T))


def canonical_stiffness(material: CellMaterial, solver: Optional[CellSolver] = None) -> Tensor4:
    """Classical homogenized tensor from the canonical correctors (H = K = 1)."""
    solver = _solver_for(material, solver)
    n = material.n
    operator = solver.assemble_cell_operator(np.eye(n), np.eye(n))
    stiffness = _element_stiffness(solver, operator.stress_tensors)
    responses = []
    for basis in sym_basis(n):
        corrector = solver.solve_corrector_canonical(basis)
        strain = basis.entries + corrector.gradient_at_centroids()
        responses.append(np.einsum("eijkl,ekl->ij", stiffness, strain) / material.mesh.num_elements)
    return tensor_from_mandel_responses(responses, n)


def effective_residual_for_K(material: CellMaterial, K: Any,
                             solver: Optional[CellSolver] = None) -> Tensor2:
    """S_r,hom when H = K: K avg(S(K^T K) + C grad(w0)) K^T with the plain phase stiffness."""
    solver = _solver_for(material, solver)
    n = material.n
    K = K.entries if isinstance(K, Tensor2) else np.asarray(K, dtype=float)
    operator = solver.assemble_cell_operator(np.eye(n), np.eye(n))
    stiffness = _element_stiffness(solver, operator.stress_tensors)
    corrector = solver.solve_residual_K(K)
    stress = (solver.residual_generator_field(K)
              + np.einsum("eijkl,ekl->eij", stiffness, corrector.gradient_at_centroids()))
    average = K @ stress.mean(axis=0) @ K.T
    return Tensor2(0.5 * (average + average.T))


def pushforward_effective(base: Tensor4, M: Tensor2) -> Tensor4:
    """pushforward(C_hom(x1), M); the transport of the effective tensor between points."""
    if not M.is_invertible():
        raise SingularTransformError(f"transport matrix is singular (cond={M.condition_number():.3e})")
    return apply_transform_elasticity(base, M)


def material_uniformity(K_field: TransformField, x1: Sequence[float], x2: Sequence[float]) -> Tensor2:
    """M(x1, x2) = K_x1^-1 K_x2."""
    return K_field.value(np.asarray(x1)).inv() @ K_field.value(np.asarray(x2))


def anisotropy_transport(K_field: TransformField, x_from: Sequence[float], x_to: Sequence[float]) -> Tensor2:
    """K_to K_from^-1, which carries C_hom(x_from) onto C_hom(x_to) for any K field.

    Equals material_uniformity(K_field, x_from, x_to) whenever the two K
    values commute, e.g. planar rotations.
    """
    return K_field.value(np.asarray(x_to)) @ K_field.value(np.asarray(x_from)).inv()


class _ResidualProvider:
    """Residual stresses for H = K, cached by quantized K.

    Without a material the provider only answers from its cache, which is
    how an imported fast-path law evaluates.
    """

    def __init__(self, n: int, quantum: float, stress_free: bool,
                 material: Optional[CellMaterial] = None, solver: Optional[CellSolver] = None):
        self.n = n
        self.quantum = quantum
        self.stress_free = stress_free
        self.material = material
        self.solver = solver
        self._cache: Dict[Tuple[int, ...], Tuple[np.ndarray, np.ndarray]] = {}
        self._lock = threading.Lock()

    @classmethod
    def for_material(cls, material: CellMaterial, solver: CellSolver) -> "_ResidualProvider":
        stress_free = all(p.residual_is_stress_free and not p.residual_is_position_dependent
                          for p in material.phases)
        return cls(material.n, solver.settings.cache_quantum, stress_free, material, solver)

    def _key(self, K: np.ndarray) -> Tuple[int, ...]:
        return tuple(np.round(K.ravel() / self.quantum).astype(np.int64).tolist())

    def __call__(self, K_values: np.ndarray) -> np.ndarray:
        out = np.zeros((K_values.shape[0], self.n, self.n))
        for index, K in enumerate(K_values):
            if self.stress_free and Tensor2(K).is_orthogonal(1e-10):
                continue  # rotations leave stress-free generators unloaded
            key = self._key(K)
            with self._lock:
                cached = self._cache.get(key)
            if cached is None:
                if self.material is None:
                    raise ConfigError(f"law file holds no residual for K={np.round(K, 12).tolist()}; "
                                      "import it together with its material")
                cached = (np.array(K, dtype=float),
                          effective_residual_for_K(self.material, K, self.solver).entries)
                with self._lock:
                    self._cache[key] = cached
            out[index] = cached[1]
        return out

    def to_dict(self) -> Dict[str, Any]:
        with self._lock:
            values = [{"K": K.tolist(), "S": S.tolist()} for K, S in self._cache.values()]
        return {"stress_free": self.stress_free, "cache_quantum": self.quantum, "values": values}

    def load(self, data: Dict[str, Any]) -> None:
        for entry in data.get("values", []):
            K = np.asarray(entry["K"], dtype=float).reshape(self.n, self.n)
            S = np.asarray(entry["S"], dtype=float).reshape(self.n, self.n)
            with self._lock:
                self._cache[self._key(K)] = (K, S)


def _check_H_equals_K(H_field: TransformField, K_field: TransformField, x0: np.ndarray,
                      domain: Box, samples_per_axis: int = 9) -> None:
    axes = [np.linspace(lo, hi, samples_per_axis) for lo, hi in zip(domain.lower, domain.upper)]
    points = np.vstack([np.array(list(product(*axes))), x0[None]])
    H_values, K_values = H_field(points), K_field(points)
    mismatch = np.max(np.abs(H_values - K_values), axis=(1, 2))
    scale = 1e-12 * (1.0 + np.max(np.abs(K_values), axis=(1, 2)))
    bad = np.flatnonzero(mismatch > scale)
    if bad.size:
        x = points[bad[0]]
        raise ConfigError(f"the fast path requires H = K; they differ by {mismatch[bad[0]]:.3e} "
                          f"at x={x.tolist()}")


def build_fast_path(material: CellMaterial, K_field: TransformField, x0: Sequence[float],
                    solver: Optional[CellSolver] = None,
                    H_field: Optional[TransformField] = None,
                    domain: Optional[Box] = None) -> FastPathLaw:
    """Law for H = K from the canonical correctors; no further stiffness solves are needed.

    When H_field is given it must agree with K_field on a lattice over the
    domain (the unit box by default) and at x0.
    """
    solver = _solver_for(material, solver)
    x0 = np.asarray(x0, dtype=float)
    if H_field is not None:
        _check_H_equals_K(H_field, K_field, x0, domain or Box.unit(material.n))
    K0 = K_field.value(x0)
    base = apply_transform_elasticity(canonical_stiffness(material, solver), K0)
    provider = _ResidualProvider.for_material(material, solver)
    residual0 = provider(K0.entries[None])[0]
    record = LawRecord.from_arrays(x0, K0.entries, K0.entries, residual0, base.entries)
    logger.info(f"Built fast-path law at x0={x0.tolist()}", extra={"canonical_solves": solver.counters["canonical"]})
    return FastPathLaw(material.n, x0, K0.entries, base.entries, K_field, provider, records=[record],
                       metadata={"canonical_solves": int(solver.counters["canonical"])})


def _exact_values(material: CellMaterial, solver: CellSolver, H: np.ndarray,
                  K: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    residual = effective_residual_at(material, H, K, solver).entries
    stiffness = effective_elasticity_at(material, H, K, solver).entries
    return residual, stiffness


def build_law_table(material: CellMaterial, H_field: TransformField, K_field: TransformField,
                    axes: Sequence[Sequence[float]], solver: Optional[CellSolver] = None,
                    check_points: Optional[np.ndarray] = None, jobs: Optional[int] = None) -> TableLaw:
    """Exact law on the tensor grid of axes, interpolated multilinearly in x."""
    solver = _solver_for(material, solver)
    n = material.n
    axes = [np.asarray(a, dtype=float) for a in axes]
    if len(axes) != n or any(a.ndim != 1 or a.size < 2 or np.any(np.diff(a) <= 0) for a in axes):
        raise ConfigError("table axes need at least two increasing samples per dimension")

    points = np.array(list(product(*axes)))
    H_values, K_values = H_field(points), K_field(points)
    for x, H in zip(points, H_values):
        if not Tensor2(H).is_invertible():
            raise SingularTransformError(f"H is singular at sample point {x.tolist()}")

    with ThreadPoolExecutor(max_workers=worker_count(jobs)) as pool:
        results = list(pool.map(lambda hk: _exact_values(material, solver, hk[0], hk[1]),
                                zip(H_values, K_values)))

    residual = np.array([r for r, _ in results])
    stiffness = np.array([c for _, c in results])
    records = [LawRecord.from_arrays(x, H, K, r, c)
               for x, H, K, r, c in zip(points, H_values, K_values, residual, stiffness)]
    grid_shape = tuple(a.size for a in axes)
    residual_voigt = np.array([r.residual_voigt for r in records]).reshape(grid_shape + (-1,))
    stiffness_voigt = np.array([r.stiffness_voigt for r in records])
    stiffness_voigt = stiffness_voigt.reshape(grid_shape + stiffness_voigt.shape[1:])
    law = TableLaw(n, axes, residual_voigt, stiffness_voigt, records=records)

    if check_points is None:
        check_points = np.array(list(product(*[0.5 * (a[:-1] + a[1:]) for a in axes])))
    law.metadata["interpolation_error"] = _held_out_error(material, solver, law, H_field, K_field,
                                                       np.atleast_2d(check_points))
    logger.info(f"Built law table with {len(records)} samples", extra={
        "interpolation_error": law.metadata["interpolation_error"],
    })
    return law


def _held_out_error(material: CellMaterial, solver: CellSolver, law: EffectiveLaw,
                   H_field: TransformField, K_field: TransformField, points: np.ndarray) -> float:
    if points.size == 0:
        return 0.0
    table_residual, table_stiffness = law.evaluate(points)
    worst = 0.0
    for i, (H, K) in enumerate(zip(H_field(points), K_field(points))):
        residual, stiffness = _exact_values(material, solver, H, K)
        scale = max(np.max(np.abs(stiffness)), 1e-300)
        worst = max(worst,
                    float(np.max(np.abs(stiffness - table_stiffness[i])) / scale),
                    float(np.max(np.abs(residual - table_residual[i])) / scale))
    return worst


def build_pointwise_law(material: CellMaterial, H_field: TransformField, K_field: TransformField,
                        solver: Optional[CellSolver] = None) -> PointwiseLaw:
    """Exact law at every query point, with results cached by quantized (H, K)."""
    solver = _solver_for(material, solver)
    cache: Dict[Tuple[int, ...], Tuple[np.ndarray, np.ndarray]] = {}
    records: List[LawRecord] = []

    def provider(points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        H_values, K_values = H_field(points), K_field(points)
        residual = np.empty((len(points), material.n, material.n))
        stiffness = np.empty((len(points),) + (material.n,) * 4)
        for i, (x, H, K) in enumerate(zip(points, H_values, K_values)):
            key = solver.cache_key(H, K)
            if key not in cache:
                cache[key] = _exact_values(material, solver, H, K)
                records.append(LawRecord.from_arrays(x, H, K, *cache[key]))
            residual[i], stiffness[i] = cache[key]
        return residual, stiffness

    law = PointwiseLaw(material.n, provider)
    law.records = records
    return law


def build_law(material: CellMaterial, H_field: TransformField, K_field: TransformField,
              strategy: str, solver: Optional[CellSolver] = None,
              base_point: Optional[Sequence[float]] = None,
              axes: Optional[Sequence[Sequence[float]]] = None,
              jobs: Optional[int] = None, domain: Optional[Box] = None) -> EffectiveLaw:
    """Dispatch on the law strategy."""
    if strategy == "fast_path":
        x0 = base_point if base_point is not None else [0.0] * material.n
        return build_fast_path(material, K_field, x0, solver, H_field=H_field, domain=domain)
    if strategy == "table":
        if axes is None:
            raise ConfigError("the table strategy needs sample axes")
        return build_law_table(material, H_field, K_field, axes, solver, jobs=jobs)
    if strategy == "pointwise":
        return build_pointwise_law(material, H_field, K_field, solver)
    raise ConfigError(f"unknown law strategy '{strategy}', expected one of {LAW_STRATEGIES}")


def effective_stress(law: EffectiveLaw, E: Any, x: Sequence[float]) -> Tensor2:
    """Homogenized stress S_r,hom(x) + C_hom(x)[E] at one point."""
    strain = E.entries if isinstance(E, Tensor2) else np.asarray(E, dtype=float)
    return Tensor2(law.stress(strain, np.asarray(x, dtype=float).reshape(1, -1))[0])


def voigt_bounds(material: CellMaterial) -> Tuple[Tensor4, Tensor4]:
    """Arithmetic (Voigt) and harmonic (Reuss) averages of the phase stiffnesses."""
    fractions = material.volume_fractions
    upper = sum(f * p.stiffness.entries for f, p in zip(fractions, material.phases))
    compliance = sum(f * np.linalg.inv(mandel_matrix(p.stiffness)) for f, p in zip(fractions, material.phases))
    lower = Tensor4.from_voigt(np.linalg.inv(compliance), material.n, mandel=True)
    return Tensor4(upper), lower


def export_law(law: EffectiveLaw, path: Path) -> Path:
    """Write the law records (plain Voigt) as JSON."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(law.to_dict(), f, indent=2, sort_keys=True, default=float)
    logger.info(f"Exported {law.strategy} law with {len(law.records)} records to {path}")
    return path


def import_law(path: Path, material: Optional[CellMaterial] = None,
               solver: Optional[CellSolver] = None) -> EffectiveLaw:
    """Read a law written by export_law.

    Tables keep their grid and fast-path laws are rebuilt from their base
    tensor, K field and residual cache. With a material, K values missing
    from that cache are solved on demand. Other laws become nearest-record
    lookups.
    """
    with open(Path(path), "r", encoding="utf-8") as f:
        data = json.load(f)
    n = int(data["n"])
    records = [LawRecord.from_dict(r) for r in data["records"]]
    metadata = dict(data.get("metadata", {}), source_strategy=data.get("strategy"))
    if "grid" in data:
        axes = [np.asarray(a, dtype=float) for a in data["grid"]]
        grid_shape = tuple(a.size for a in axes)
        residual = np.array([r.residual_voigt for r in records]).reshape(grid_shape + (-1,))
        stiffness = np.array([r.stiffness_voigt for r in records])
        return TableLaw(n, axes, residual, stiffness.reshape(grid_shape + stiffness.shape[1:]),
                        records=records, metadata=metadata)
    if "fast_path" in data:
        return _import_fast_path(n, data["fast_path"], records, metadata, material, solver)
    return SampledLaw(n, records, metadata=metadata)


def _import_fast_path(n: int, block: Dict[str, Any], records: List[LawRecord], metadata: Dict[str, Any],
                      material: Optional[CellMaterial], solver: Optional[CellSolver]) -> FastPathLaw:
    descriptor = block.get("K_field")
    residuals = block.get("residuals")
    if not descriptor or descriptor.get("type", "custom") == "custom" or residuals is None:
        raise ConfigError("fast-path law file has no reproducible K field; rebuild the law instead")
    if material is not None:
        if material.n != n:
            raise ConfigError(f"law file is {n}D but the material is {material.n}D")
        provider = _ResidualProvider.for_material(material, _solver_for(material, solver))
    else:
        provider = _ResidualProvider(n, float(residuals["cache_quantum"]), bool(residuals["stress_free"]))
    provider.load(residuals)
    K_field = make_transform_field(descriptor, n)
    return FastPathLaw(n, np.asarray(block["base_point"], dtype=float), np.asarray(block["base_K"], dtype=float),
                       np.asarray(block["base_stiffness"], dtype=float), K_field, provider,
                       records=records, metadata=metadata)


def law_frame(law: EffectiveLaw) -> pd.DataFrame:
    """Records as a pandas DataFrame with one Voigt component per column."""
    rows = []
    for record in law.records:
        row: Dict[str, Any] = {f"x{i + 1}": v for i, v in enumerate(record.point)}
        row.update(dict(zip(voigt_labels("S", law.n), record.residual_voigt)))
        labels = voigt_labels("", law.n)
        for a, la in enumerate(labels):
            for b, lb in enumerate(labels):
                row[f"C{la}{lb}"] = record.stiffness_voigt[a][b]
        rows.append(row)
    return pd.DataFrame(rows)
