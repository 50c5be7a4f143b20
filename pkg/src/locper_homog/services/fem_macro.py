"""
Macroscopic finite elements: homogenized and direct (fully resolved) solves.

Both solves discretise -div(S + C grad u) = b with Q1 elements on a box and
Dirichlet data on the whole boundary. The homogenized solve takes the law at
element centroids; the direct solve samples the micro field at every Gauss
point and refuses meshes coarser than ``elements_per_period`` per epsilon.
"""

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Sequence, Union

import numpy as np
import pandas as pd
import plotly.graph_objects as go
from scipy import sparse
from scipy.sparse.linalg import spsolve

from ..exceptions import BudgetExceededError, ConfigError, ResolutionError, SolverError
from ..models.cell import CellMaterial
from ..models.fields import TransformField
from ..models.grid import Box
from ..models.law import EffectiveLaw
from ..models.macro import DisplacementField, FieldLike, MacroMesh, MacroProblem, make_vector_field
from ..models.report import ConvergenceReport
from ..models.tensor import Tensor4
from .micro_synth import MicroField, decompose, synth_microstructure
from shared.config import get_config, worker_count
from shared.logging_config import get_logger, log_solver_run, log_task_complete, log_task_start

logger = get_logger(__name__)

DEFAULT_ELEMENTS_PER_PERIOD = 8


def build_macro_mesh(domain: Union[Box, Dict[str, Any]], resolution: Union[int, Sequence[int]]) -> MacroMesh:
    box = domain if isinstance(domain, Box) else Box.from_dict(domain)
    return MacroMesh(box, np.atleast_1d(resolution))


def build_problem(mesh: MacroMesh, boundary: Optional[Dict[str, Any]] = None,
                  body_force: Optional[Dict[str, Any]] = None, law: Optional[EffectiveLaw] = None,
                  include_residual: bool = True) -> MacroProblem:
    """Problem from boundary and body-force descriptors."""
    return MacroProblem(mesh, make_vector_field(boundary, mesh.n), make_vector_field(body_force, mesh.n),
                        law, include_residual, {"boundary": boundary or {"type": "zero"},
                                                "body_force": body_force or {"type": "zero"}})


def _assemble_and_solve(problem: MacroProblem, stiffness: np.ndarray, residual: Optional[np.ndarray],
                        label: str) -> DisplacementField:
    """Assemble with per-element (E, ...) or per-Gauss-point (E, G, ...) coefficients and solve."""
    start = time.perf_counter()
    mesh = problem.mesh
    n = mesh.n
    ref = mesh.reference
    grads = mesh.shape_gradients
    volume = mesh.element_volume
    nd = mesh.element_dofs.shape[1]

    if stiffness.ndim == 5:
        products = volume * np.einsum("g,gaj,gbl->ajbl", ref.gauss_weights, grads, grads)
        local = np.einsum("eijkl,ajbl->eaibk", stiffness, products, optimize=True)
    else:
        local = volume * np.einsum("g,gaj,egijkl,gbl->eaibk", ref.gauss_weights, grads, stiffness, grads,
                                   optimize=True)
    local = local.reshape(mesh.num_elements, nd * nd)

    edof = mesh.element_dofs
    rows = np.repeat(edof, nd, axis=1).ravel()
    cols = np.tile(edof, (1, nd)).ravel()
    size = mesh.num_dofs
    matrix = sparse.coo_matrix((local.ravel(), (rows, cols)), shape=(size, size)).tocsr()
    matrix = (0.5 * (matrix + matrix.T)).tocsr()

    # Body force
    body = problem.body_force(mesh.gauss_points().reshape(-1, n)).reshape(mesh.num_elements, -1, n)
    load = volume * np.einsum("g,ga,egi->eai", ref.gauss_weights, ref.shape_values, body)
    # Residual stress moves to the right-hand side
    if residual is not None and problem.include_residual:
        if residual.ndim == 3:
            load -= volume * np.einsum("aj,eij->eai", mesh.center_gradients, residual)
        else:
            load -= volume * np.einsum("g,gaj,egij->eai", ref.gauss_weights, grads, residual)
    rhs = np.bincount(edof.ravel(), weights=load.reshape(mesh.num_elements, -1).ravel(), minlength=size)

    fixed_nodes = np.flatnonzero(mesh.boundary_nodes)
    fixed = (fixed_nodes[:, None] * n + np.arange(n)).ravel()
    free = np.setdiff1d(np.arange(size), fixed)
    values = np.zeros(size)
    values[fixed] = problem.boundary(mesh.node_coordinates[fixed_nodes]).ravel()

    reduced_rhs = rhs[free] - matrix[free][:, fixed] @ values[fixed]
    reduced = matrix[free][:, free].tocsc()
    values[free] = spsolve(reduced, reduced_rhs)
    denominator = float(np.linalg.norm(reduced_rhs)) or 1.0
    residual_norm = float(np.linalg.norm(reduced @ values[free] - reduced_rhs)) / denominator
    if not np.all(np.isfinite(values)) or residual_norm > 1e-8:
        raise SolverError(f"{label} macro solve failed (relative residual {residual_norm:.3e})",
                          residual=residual_norm)

    log_solver_run(label, free.size, 1, residual_norm, time.perf_counter() - start,
                   elements=mesh.num_elements)
    return DisplacementField(mesh, values.reshape(-1, n), residual_norm, {"solve": label})


def solve_homogenized(problem: MacroProblem) -> DisplacementField:
    """Solve with the homogenized law evaluated at element centroids."""
    if problem.law is None:
        raise ConfigError("the homogenized solve needs an effective law")
    residual, stiffness = problem.law.evaluate(problem.mesh.element_centroids)
    return _assemble_and_solve(problem, stiffness, residual, "homogenized")


def required_resolution(box: Box, epsilon: float, elements_per_period: int = DEFAULT_ELEMENTS_PER_PERIOD,
                        minimum: int = 2) -> np.ndarray:
    """Elements per axis needed to resolve epsilon with elements_per_period elements."""
    return np.array([max(minimum, math.ceil(elements_per_period * e / epsilon - 1e-9)) for e in box.extent])


def solve_direct(problem: MacroProblem, micro: MicroField, epsilon: Optional[float] = None,
                 elements_per_period: int = DEFAULT_ELEMENTS_PER_PERIOD) -> DisplacementField:
    """Solve with the micro field sampled at Gauss points."""
    epsilon = micro.epsilon if epsilon is None else epsilon
    if not math.isclose(epsilon, micro.epsilon, rel_tol=1e-12):
        raise ConfigError(f"epsilon {epsilon} does not match the micro field ({micro.epsilon})")
    needed = required_resolution(problem.mesh.box, epsilon, elements_per_period)
    if np.any(problem.mesh.counts < needed):
        raise ResolutionError(
            f"direct solve at epsilon={epsilon} needs at least {elements_per_period} elements per period "
            f"({needed.tolist()} per axis), mesh has {problem.mesh.counts.tolist()}")
    points = problem.mesh.gauss_points()
    shape = points.shape[:2]
    residual, stiffness = micro.evaluate(points.reshape(-1, problem.n))
    n = problem.n
    return _assemble_and_solve(problem, stiffness.reshape(shape + (n,) * 4),
                               residual.reshape(shape + (n, n)), "direct")


def _finite_difference_gradient(function: Callable[[np.ndarray], np.ndarray], points: np.ndarray,
                                step: float = 1e-6) -> np.ndarray:
    n = points.shape[1]
    gradient = np.empty((points.shape[0], n, n))
    for j in range(n):
        shift = np.zeros(n)
        shift[j] = step
        gradient[:, :, j] = (function(points + shift) - function(points - shift)) / (2.0 * step)
    return gradient


def error_norms(u_a: DisplacementField, u_b: FieldLike,
                gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                stiffness: Optional[Union[Tensor4, Callable[[np.ndarray], Any]]] = None) -> Dict[str, float]:
    """L2, H1 seminorm, H1 and energy norms of u_a - u_b on the finer of the two meshes.

    The energy norm uses ``stiffness`` (a tensor or a callable returning
    coefficients per point); without it, C[E] = 2 sym(E).
    """
    mesh = u_a.mesh
    if isinstance(u_b, DisplacementField):
        if not (np.allclose(u_b.mesh.box.lower, mesh.box.lower) and np.allclose(u_b.mesh.box.upper, mesh.box.upper)):
            raise ConfigError("error norms need fields on the same box")
        if u_b.mesh.num_elements > mesh.num_elements:
            mesh = u_b.mesh
    points = mesh.gauss_points().reshape(-1, mesh.n)
    weights = mesh.quadrature_weights().ravel()

    difference = u_a.evaluate(points) - u_b(points)
    if isinstance(u_b, DisplacementField):
        grad_b = u_b.gradient(points)
    elif gradient is not None:
        grad_b = gradient(points)
    else:
        grad_b = _finite_difference_gradient(u_b, points)
    grad_difference = u_a.gradient(points) - grad_b
    strain = 0.5 * (grad_difference + np.swapaxes(grad_difference, 1, 2))

    if stiffness is None:
        energy_density = 2.0 * np.sum(strain * strain, axis=(1, 2))
    else:
        if isinstance(stiffness, Tensor4):
            coefficients = np.broadcast_to(stiffness.entries, (points.shape[0],) + stiffness.entries.shape)
        else:
            coefficients = stiffness(points)
            if isinstance(coefficients, tuple):
                coefficients = coefficients[1]
        energy_density = np.einsum("pij,pijkl,pkl->p", strain, coefficients, strain)

    l2 = math.sqrt(float(np.sum(weights * np.sum(difference ** 2, axis=1))))
    h1_semi = math.sqrt(float(np.sum(weights * np.sum(grad_difference ** 2, axis=(1, 2)))))
    return {
        "l2": l2,
        "h1_semi": h1_semi,
        "h1": math.sqrt(l2 ** 2 + h1_semi ** 2),
        "energy": math.sqrt(max(0.0, float(np.sum(weights * energy_density)))),
    }


def field_norms(u: DisplacementField) -> Dict[str, float]:
    zero = DisplacementField(u.mesh, np.zeros_like(u.values))
    return error_norms(u, zero)


def export_displacement(u: DisplacementField, path: Path, float_format: str = "%.12e") -> Path:
    """Nodal coordinates and displacements as CSV."""
    n = u.n
    frame = pd.DataFrame(u.mesh.node_coordinates, columns=[f"x{i + 1}" for i in range(n)])
    for i in range(n):
        frame[f"u{i + 1}"] = u.values[:, i]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=float_format, lineterminator="\n")
    return path


@dataclass
class ConvergenceSetup:
    """Everything a convergence study needs apart from the epsilon ladder."""

    material: CellMaterial
    H_field: TransformField
    K_field: TransformField
    law: EffectiveLaw
    domain: Box
    r: float = 0.6
    boundary: Dict[str, Any] = field(default_factory=lambda: {"type": "zero"})
    body_force: Dict[str, Any] = field(default_factory=lambda: {"type": "sine"})
    anchor_rule: str = "center"
    elements_per_period: int = DEFAULT_ELEMENTS_PER_PERIOD
    max_resolution: int = 512
    time_budget_seconds: Optional[float] = None

    @classmethod
    def with_config_defaults(cls, **kwargs: Any) -> "ConvergenceSetup":
        """Fill elements_per_period and max_resolution from the macro config when unset or None."""
        macro = get_config().get("macro", {})
        if kwargs.get("elements_per_period") is None:
            kwargs["elements_per_period"] = int(macro.get("elements_per_period", DEFAULT_ELEMENTS_PER_PERIOD))
        if kwargs.get("max_resolution") is None:
            kwargs["max_resolution"] = int(macro.get("max_resolution", 512))
        return cls(**kwargs)


def convergence_study(setup: ConvergenceSetup, epsilons: Sequence[float],
                      jobs: Optional[int] = None) -> ConvergenceReport:
    """Direct against homogenized solutions along the epsilon ladder.

    Both solves of one rung share the mesh the direct solve needs, so the
    errors measure homogenization and not mesh mismatch.
    """
    task_id = f"converge-{len(epsilons)}"
    log_task_start(task_id, "convergence_study", epsilons=list(epsilons))
    start = time.perf_counter()
    report = ConvergenceReport(metadata={"r": setup.r, "anchor_rule": setup.anchor_rule,
                                         "law": setup.law.strategy,
                                         "elements_per_period": setup.elements_per_period})

    ladder = []
    for eps in sorted(epsilons, reverse=True):
        counts = required_resolution(setup.domain, eps, setup.elements_per_period)
        if np.any(counts > setup.max_resolution):
            logger.warning(f"epsilon={eps} needs {counts.tolist()} elements per axis, "
                           f"over the budget of {setup.max_resolution}")
            report.status = "budget_exceeded"
            break
        ladder.append((eps, counts))
    if not ladder:
        raise BudgetExceededError("no epsilon in the ladder fits the resolution budget")

    def run(entry: Any) -> Optional[Dict[str, Any]]:
        eps, counts = entry
        if setup.time_budget_seconds is not None and time.perf_counter() - start > setup.time_budget_seconds:
            return None
        tic = time.perf_counter()
        mesh = build_macro_mesh(setup.domain, counts)
        homogenized = solve_homogenized(build_problem(mesh, setup.boundary, setup.body_force, setup.law))
        decomposition = decompose(setup.domain, eps, setup.r, setup.anchor_rule)
        micro = synth_microstructure(setup.material, setup.H_field, setup.K_field, decomposition)
        direct = solve_direct(build_problem(mesh, setup.boundary, setup.body_force), micro,
                              elements_per_period=setup.elements_per_period)
        norms = error_norms(direct, homogenized)
        reference = field_norms(homogenized)
        report.timings[f"epsilon_{eps:.6g}"] = time.perf_counter() - tic
        return {
            "epsilon": float(eps),
            "resolution": int(counts.max()),
            "l2_error": norms["l2"],
            "h1_error": norms["h1"],
            "relative_l2_error": norms["l2"] / max(reference["l2"], 1e-300),
            "relative_h1_error": norms["h1"] / max(reference["h1"], 1e-300),
            "direct_h1_norm": field_norms(direct)["h1"],
        }

    workers = worker_count(jobs)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(run, ladder))

    report.rows = [row for row in results if row is not None]
    if len(report.rows) < len(results):
        report.status = "budget_exceeded"
    duration = time.perf_counter() - start
    log_task_complete(task_id, "convergence_study", duration, status_detail=report.status,
                      monotone=report.is_monotone() if len(report.rows) >= 2 else None)
    return report


def export_convergence_csv(report: ConvergenceReport, path: Path, float_format: str = "%.12e") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    report.to_frame().to_csv(path, index=False, float_format=float_format, lineterminator="\n")
    return path


def plot_convergence(report: ConvergenceReport, path: Path) -> Path:
    """Log-log error plot as a standalone HTML file."""
    frame = report.to_frame()
    figure = go.Figure()
    for column, label in (("l2_error", "L2 error"), ("h1_error", "H1 error")):
        figure.add_trace(go.Scatter(x=frame["epsilon"], y=frame[column], mode="lines+markers", name=label))
    figure.update_layout(title="Direct vs homogenized solution", xaxis_title="epsilon", yaxis_title="error",
                         xaxis_type="log", yaxis_type="log")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    figure.write_html(str(path), include_plotlyjs="cdn")
    return path

