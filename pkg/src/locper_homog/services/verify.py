"""
Verification harness: closed-form laminate oracles, the invariant suite and
the convergence acceptance ladders.

Checks never raise on a failed comparison; they return CheckReport objects
ordered by check id. Library errors inside a check become failed reports.
"""

import math
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple
from xml.etree import ElementTree

import numpy as np
import pandas as pd

from ..exceptions import BudgetExceededError, LocperError
from ..models.cell import CellMaterial, Phase
from ..models.fields import TransformField, constant_field, make_transform_field
from ..models.grid import Box
from ..models.report import CheckReport, ConvergenceReport
from ..models.tensor import Tensor2, Tensor4
from .artifacts import write_csv
from .cell_domain import assign_phases, build_cell_mesh
from .cell_solver import CellSolver, SolverSettings
from .effective_law import (
    anisotropy_transport,
    build_fast_path,
    canonical_stiffness,
    effective_elasticity_at,
    effective_residual_at,
    effective_residual_for_K,
    effective_stress,
    voigt_bounds,
)
from .fem_macro import ConvergenceSetup, build_macro_mesh, build_problem, convergence_study, solve_homogenized
from .micro_synth import align_to_nonperiodic, decompose, derive_H_from_L, derived_H_field, nonperiodic_field
from .micro_synth import nonperiodic_gap, synth_microstructure
from .tensor_core import (
    apply_transform_elasticity,
    check_symmetries,
    coercivity_constant,
    make_isotropic,
    mandel_matrix,
    rotation,
    sym_basis,
    tensor_from_mandel_responses,
    transform_array,
)
from shared.config import worker_count
from shared.logging_config import get_logger, log_check_result

logger = get_logger(__name__)

EXACT_TOLERANCE = 1e-10
SYMMETRY_TOLERANCE = 1e-12

# Checks whose outcome depends on mesh or solver resolution, with their default tolerances
DISCRETIZATION_CHECKS = {
    "cell.laminate_off_grid": 0.1,
    "cell.linearity": 1e-10,
    "law.fast_path_equivalence": 1e-3,
    "law.material_uniformity": 1e-3,
}

ACCEPTANCE_CRITERIA = {
    1: ("Laminate oracle", ["laminate.axis_normal_entry", "laminate.refinement_ratio", "laminate.tensor"]),
    2: ("Trivial reductions", ["cell.constant_stiffness", "law.k_orthogonal_zero_residual"]),
    3: ("Effective-tensor structure", ["law.effective_symmetry"]),
    4: ("H = K fast path", ["law.fast_path_canonical_count", "law.fast_path_equivalence"]),
    5: ("Material uniformity", ["law.material_uniformity"]),
    6: ("Corrector linearity", ["cell.linearity", "cell.skew_strain_zero"]),
    7: ("Convergence study", ["converge.laminate_rotation.final_ratio", "converge.laminate_rotation.h1_band",
                              "converge.laminate_rotation.monotone"]),
    8: ("Residual irrelevance under periodicity", ["macro.residual_irrelevance"]),
    9: ("Nonperiodic reduction diagnostic", ["micro.derived_H_jacobian", "micro.nonperiodic_gap"]),
    10: ("Determinism", ["determinism.laminate_oracle"]),
}

CheckFunction = Callable[[], CheckReport]


def _relative(value: np.ndarray, reference: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(reference))), 1e-300)
    return float(np.max(np.abs(np.asarray(value) - np.asarray(reference)))) / scale


def _run_check(check_id: str, function: CheckFunction) -> CheckReport:
    start = time.perf_counter()
    try:
        report = function()
    except LocperError as e:
        report = CheckReport(check_id, "fail", math.inf, 0.0, "error", details={"error": str(e)})
    report.runtime_seconds = time.perf_counter() - start
    log_check_result(report.check_id, report.status, report.measured, report.tolerance)
    return report


def _run_all(checks: Dict[str, CheckFunction], jobs: Optional[int]) -> List[CheckReport]:
    with ThreadPoolExecutor(max_workers=worker_count(jobs)) as pool:
        reports = list(pool.map(lambda item: _run_check(*item), checks.items()))
    return sorted(reports, key=lambda r: r.check_id)


# Closed-form laminates
#
# Layers normal to e_a. The corrector gradient in phase p is g_p (x) e_a with
# sum_p f_p g_p = 0, and the traction sigma_p e_a is the same in every layer.


def _acoustic(stiffness: np.ndarray, axis: int) -> np.ndarray:
    return stiffness[:, axis, :, axis]


def _laminate_average(stiffnesses: Sequence[np.ndarray], sources: Sequence[np.ndarray],
                      fractions: Sequence[float], axis: int) -> np.ndarray:
    """Average stress of a laminate whose layers carry the base stresses ``sources``."""
    n = sources[0].shape[0]
    inverses = [np.linalg.inv(_acoustic(c, axis)) for c in stiffnesses]
    tractions = [s[:, axis] for s in sources]
    weight = sum(f * a for f, a in zip(fractions, inverses))
    traction = np.linalg.solve(weight, sum(f * a @ t for f, a, t in zip(fractions, inverses, tractions)))
    e = np.zeros(n)
    e[axis] = 1.0
    average = np.zeros((n, n))
    for f, c, a, s, t in zip(fractions, stiffnesses, inverses, sources, tractions):
        g = a @ (traction - t)
        strain = 0.5 * (np.outer(g, e) + np.outer(e, g))
        average += f * (s + np.einsum("ijkl,kl->ij", c, strain))
    return average


def laminate_closed_form(stiffnesses: Sequence[Tensor4], fractions: Sequence[float], axis: int = 0) -> Tensor4:
    """Effective stiffness of a periodic laminate with layers normal to coordinate ``axis``."""
    if not math.isclose(sum(fractions), 1.0, rel_tol=1e-12):
        raise ValueError("laminate fractions must sum to one")
    arrays = [c.entries for c in stiffnesses]
    n = stiffnesses[0].n
    responses = []
    for basis in sym_basis(n):
        sources = [np.einsum("ijkl,kl->ij", c, basis.entries) for c in arrays]
        responses.append(_laminate_average(arrays, sources, fractions, axis))
    return tensor_from_mandel_responses(responses, n)


def laminate_residual_closed_form(stiffnesses: Sequence[Tensor4], residuals: Sequence[Tensor2],
                                  fractions: Sequence[float], axis: int = 0) -> Tensor2:
    """Effective residual stress of a laminate whose layers carry constant residual stresses."""
    average = _laminate_average([c.entries for c in stiffnesses], [r.entries for r in residuals],
                                fractions, axis)
    return Tensor2(0.5 * (average + average.T))


def _isotropic_phases(moduli: Sequence[Tuple[float, float]], n: int) -> List[Phase]:
    return [Phase(name=f"phase{i}", stiffness=make_isotropic(lam, mu, n)) for i, (lam, mu) in enumerate(moduli)]


def _laminate_material(phases: Sequence[Phase], m: int, fraction: float, axis: int) -> CellMaterial:
    n = phases[0].n
    return assign_phases(build_cell_mesh(n, m), {"type": "laminate", "fraction": fraction, "axis": axis}, phases)


def gap_shrinks(coarse: float, fine: float, factor: float = 0.5) -> bool:
    """A discretization gap shrinks under refinement or already sits at round-off."""
    return fine <= EXACT_TOLERANCE or fine <= factor * coarse


def _suite_settings() -> SolverSettings:
    return SolverSettings(method="direct", rtol=1e-10)


def run_laminate_oracle(moduli: Sequence[Tuple[float, float]] = ((10.0, 10.0), (1.0, 1.0)),
                        fraction: float = 0.5, resolutions: Sequence[int] = (16, 32, 64), axis: int = 0,
                        refinement_fraction: float = 1.0 / 3.0, n: int = 2,
                        settings: Optional[SolverSettings] = None,
                        jobs: Optional[int] = None) -> List[CheckReport]:
    """Cell solves on laminates against the closed form.

    Accuracy is measured at the finest resolution with the interface at
    ``fraction``. The refinement ratio uses ``refinement_fraction``, chosen
    off the element grid so that the discrete layer thickness converges.
    """
    settings = settings or _suite_settings()
    phases = _isotropic_phases(moduli, n)
    stiffnesses = [p.stiffness for p in phases]
    finest = max(resolutions)

    def homogenized(material: CellMaterial) -> Tensor4:
        return canonical_stiffness(material, CellSolver(material, settings))

    def equal_phases() -> CheckReport:
        same = [phases[0], Phase(name="copy", stiffness=phases[0].stiffness)]
        computed = homogenized(_laminate_material(same, min(resolutions), fraction, axis))
        return CheckReport.compare("laminate.equal_phases", _relative(computed.entries, stiffnesses[0].entries),
                                   EXACT_TOLERANCE, "TRIVIAL: equal phases reproduce the phase tensor")

    expected = laminate_closed_form(stiffnesses, [fraction, 1.0 - fraction], axis)
    cache: Dict[str, Tensor4] = {}

    def finest_tensor() -> Tensor4:
        if "finest" not in cache:
            cache["finest"] = homogenized(_laminate_material(phases, finest, fraction, axis))
        return cache["finest"]

    def axis_entry() -> CheckReport:
        computed = float(finest_tensor().to_voigt()[axis, axis])
        reference = float(expected.to_voigt()[axis, axis])
        return CheckReport.compare("laminate.axis_normal_entry", abs(computed - reference) / abs(reference), 1e-3,
                                   "DERIVED: closed-form laminate with traction continuity",
                                   resolution=finest, computed=computed, expected=reference)

    def full_tensor() -> CheckReport:
        return CheckReport.compare("laminate.tensor", _relative(finest_tensor().to_voigt(), expected.to_voigt()),
                                   1e-3, "DERIVED: closed-form laminate with traction continuity",
                                   resolution=finest)

    def refinement() -> CheckReport:
        reference = laminate_closed_form(stiffnesses, [refinement_fraction, 1.0 - refinement_fraction], axis)
        errors = []
        for m in sorted(resolutions):
            computed = homogenized(_laminate_material(phases, m, refinement_fraction, axis))
            errors.append(_relative(computed.to_voigt(), reference.to_voigt()))
        if max(errors) <= EXACT_TOLERANCE:
            ratio = 0.0
        else:
            ratio = max(b / a for a, b in zip(errors[:-1], errors[1:]))
        orders = [math.log2(a / b) for a, b in zip(errors[:-1], errors[1:]) if a > 0.0 and b > 0.0]
        return CheckReport.compare("laminate.refinement_ratio", ratio, 0.6,
                                   "DERIVED: error ratio per resolution doubling",
                                   resolutions=sorted(resolutions), errors=errors, orders=orders,
                                   fraction=refinement_fraction)

    def residual() -> CheckReport:
        K = np.diag([1.1, 0.9] + [1.0] * (n - 2))
        material = _laminate_material(phases, finest, fraction, axis)
        computed = effective_residual_for_K(material, K, CellSolver(material, settings))
        cauchy_green = K.T @ K
        inner = [Tensor2(p.residual_generator(cauchy_green)) for p in phases]
        average = laminate_residual_closed_form(stiffnesses, inner, [fraction, 1.0 - fraction], axis)
        reference = K @ average.entries @ K.T
        return CheckReport.compare("laminate.residual_stress", _relative(computed.entries, reference), 1e-3,
                                   "DERIVED: closed-form laminate under a constant residual stress")

    checks = {
        "laminate.axis_normal_entry": axis_entry,
        "laminate.equal_phases": equal_phases,
        "laminate.refinement_ratio": refinement,
        "laminate.residual_stress": residual,
        "laminate.tensor": full_tensor,
    }
    finest_tensor()
    return _run_all(checks, jobs)


def _random_frame(rng: np.random.Generator, n: int, max_condition: float = 10.0) -> np.ndarray:
    """Rotation times a symmetric positive stretch, redrawn until the condition number is at most max_condition."""
    while True:
        S = rng.uniform(-0.4, 0.4, size=(n, n))
        stretch = np.eye(n) + 0.5 * (S + S.T)
        frame = rotation(rng.uniform(0.0, 2.0 * np.pi), n).entries @ stretch
        if np.linalg.cond(frame) <= max_condition and np.linalg.det(frame) > 0.0:
            return frame


def _random_symmetric(rng: np.random.Generator, n: int) -> np.ndarray:
    A = rng.uniform(-1.0, 1.0, size=(n, n))
    return 0.5 * (A + A.T)


def suite_material(seed: int = 0, resolution: int = 32, n: int = 2) -> CellMaterial:
    """Two isotropic phases, a stiff matrix around a centred inclusion."""
    rng = np.random.default_rng(seed)
    matrix = (float(rng.uniform(1.0, 5.0)), float(rng.uniform(1.0, 5.0)))
    inclusion = (float(rng.uniform(0.1, 0.5)), float(rng.uniform(0.1, 0.5)))
    phases = _isotropic_phases([matrix, inclusion], n)
    return assign_phases(build_cell_mesh(n, resolution), {"type": "inclusion", "radius": 0.3}, phases)


def run_invariant_suite(seed: int = 0, base_tensor: Optional[Tensor4] = None,
                        discretization_tolerance: Optional[float] = None, resolution: int = 32,
                        random_pairs: int = 20, resolution_3d: int = 8,
                        jobs: Optional[int] = None) -> List[CheckReport]:
    """Deterministic property checks for one seed.

    ``base_tensor`` feeds the pure tensor checks (composition, symmetry
    preservation, coercivity inheritance). ``discretization_tolerance``
    replaces the tolerance of every check listed in DISCRETIZATION_CHECKS.
    """
    rng = np.random.default_rng(seed)
    material = suite_material(seed, resolution)
    n = material.n
    settings = _suite_settings()
    base = base_tensor if base_tensor is not None else material.phases[0].stiffness

    def tolerance(check_id: str) -> float:
        if discretization_tolerance is not None and check_id in DISCRETIZATION_CHECKS:
            return discretization_tolerance
        return DISCRETIZATION_CHECKS.get(check_id, EXACT_TOLERANCE)

    # Draw every random quantity up front so the outcome does not depend on check order
    frames = [_random_frame(rng, n) for _ in range(6)]
    pairs = [(_random_frame(rng, n), _random_frame(rng, n)) for _ in range(random_pairs)]
    strains = [_random_symmetric(rng, n) for _ in range(3)]
    coefficients = rng.uniform(-2.0, 2.0, size=2)
    skew = rng.uniform(-1.0, 1.0, size=(n, n))
    gradient = rng.uniform(0.3, 1.0, size=n)
    point_pairs = rng.uniform(0.0, 1.0, size=(5, 2, n))
    fast_points = rng.uniform(0.0, 1.0, size=(3, n))
    angle = float(rng.uniform(0.0, 2.0 * np.pi))

    def composition() -> CheckReport:
        A, B = frames[0], frames[1]
        lhs = transform_array(transform_array(base.entries, A), B)
        rhs = transform_array(base.entries, B @ A)
        return CheckReport.compare("tensor.composition", _relative(lhs, rhs), SYMMETRY_TOLERANCE,
                                   "TRIVIAL: pushforward composes as apply(C, BA)")

    def symmetry_preservation() -> CheckReport:
        reports = [check_symmetries(apply_transform_elasticity(base, Tensor2(A))) for A in frames[:3]]
        violation = max(r.max_violation for r in reports)
        status = "pass" if all(r.minor and r.major for r in reports) else "fail"
        return CheckReport("tensor.symmetry.preservation", status, violation, SYMMETRY_TOLERANCE,
                           "TRIVIAL: pushforward keeps minor and major symmetry",
                           details={"reports": [r.to_dict() for r in reports]})

    def coercivity_inheritance() -> CheckReport:
        constants = [coercivity_constant(apply_transform_elasticity(base, Tensor2(A))) for A in frames[:3]]
        status = "pass" if min(constants) > 0.0 else "fail"
        return CheckReport("tensor.symmetry.coercivity_inheritance", status, min(constants), 0.0,
                           "TRIVIAL: pushforward by an invertible map keeps coercivity",
                           details={"constants": constants})

    def skew_strain() -> CheckReport:
        solver = CellSolver(material, settings)
        corrector = solver.solve_corrector_E(frames[2], frames[3], 0.5 * (skew - skew.T))
        return CheckReport.compare("cell.skew_strain_zero", corrector.norm(), EXACT_TOLERANCE,
                                   "TRIVIAL: skew strains carry no stress")

    def zero_mean() -> CheckReport:
        solver = CellSolver(material, settings)
        corrector = solver.solve_corrector_E(frames[2], frames[3], strains[0])
        measured = float(np.max(np.abs(corrector.mean()))) / max(corrector.norm(), 1e-300)
        return CheckReport.compare("cell.zero_mean", measured, EXACT_TOLERANCE,
                                   "TRIVIAL: correctors live in the zero-mean subspace")

    def linearity() -> CheckReport:
        solver = CellSolver(material, settings)
        H, K = frames[2], frames[3]
        a, b = coefficients
        w1 = solver.solve_corrector_E(H, K, strains[1]).values
        w2 = solver.solve_corrector_E(H, K, strains[2]).values
        combined = solver.solve_corrector_E(H, K, a * strains[1] + b * strains[2]).values
        with_skew = solver.solve_corrector_E(H, K, strains[1] + skew - skew.T).values
        measured = max(_relative(combined, a * w1 + b * w2), _relative(with_skew, w1))
        return CheckReport.compare("cell.linearity", measured, tolerance("cell.linearity"),
                                   "TRIVIAL: correctors depend linearly on sym(E)")

    def constant_stiffness() -> CheckReport:
        homogeneous = assign_phases(material.mesh, {"type": "homogeneous"}, material.phases[:1])
        solver = CellSolver(homogeneous, settings)
        H, K = frames[4], frames[5]
        norms = [solver.solve_corrector_E(H, K, b).norm() for b in sym_basis(n)]
        computed = effective_elasticity_at(homogeneous, H, K, solver)
        expected = apply_transform_elasticity(homogeneous.phases[0].stiffness, Tensor2(K))
        measured = max(max(norms), _relative(computed.entries, expected.entries))
        return CheckReport.compare("cell.constant_stiffness", measured, EXACT_TOLERANCE,
                                   "TRIVIAL: constant stiffness needs no correction",
                                   corrector_norms=norms)

    def off_grid_laminate() -> CheckReport:
        fraction = 1.0 / 3.0
        laminate = _laminate_material(material.phases, resolution, fraction, 0)
        computed = canonical_stiffness(laminate, CellSolver(laminate, settings))
        expected = laminate_closed_form([p.stiffness for p in material.phases], [fraction, 1.0 - fraction])
        return CheckReport.compare("cell.laminate_off_grid", _relative(computed.to_voigt(), expected.to_voigt()),
                                   tolerance("cell.laminate_off_grid"),
                                   "DERIVED: closed-form laminate, interface between element faces")

    def orthogonal_residual() -> CheckReport:
        Q = rotation(angle, n).entries
        residual = effective_residual_at(material, Q, Q, CellSolver(material, settings))
        return CheckReport.compare("law.k_orthogonal_zero_residual", residual.norm(), EXACT_TOLERANCE,
                                   "TRIVIAL: rotations leave stress-free generators unloaded")

    def effective_symmetry() -> CheckReport:
        solver = CellSolver(material, settings)
        violations, constants = [], []
        for H, K in pairs:
            tensor = effective_elasticity_at(material, H, K, solver)
            report = check_symmetries(tensor, tol=EXACT_TOLERANCE)
            violations.append(report.max_violation if report.minor and report.major else math.inf)
            constants.append(coercivity_constant(tensor))
        measured = max(violations)
        status = "pass" if measured <= EXACT_TOLERANCE and min(constants) > 0.0 else "fail"
        return CheckReport("law.effective_symmetry", status, measured, EXACT_TOLERANCE,
                           "TRIVIAL: effective tensors inherit symmetry and coercivity",
                           details={"pairs": len(pairs), "min_coercivity": min(constants)})

    K_rotation = make_transform_field({"type": "rotation", "gradient": gradient.tolist()}, n)

    def fast_path_count() -> CheckReport:
        solid = _laminate_material(_isotropic_phases([(2.0, 1.0), (0.5, 0.3)], 3), resolution_3d, 0.5, 0)
        cases = [(material, K_rotation),
                 (solid, make_transform_field({"type": "rotation", "gradient": [0.5, 0.2, 0.0]}, 3))]
        counts = []
        for mat, K_field in cases:
            solver = CellSolver(mat, settings)
            build_fast_path(mat, K_field, [0.5] * mat.n, solver)
            counts.append((mat.n, int(solver.counters["canonical"])))
        mismatches = sum(abs(count - dim * (dim + 1) // 2) for dim, count in counts)
        return CheckReport.compare("law.fast_path_canonical_count", mismatches, 0,
                                   "TRIVIAL: n(n+1)/2 canonical solves per material",
                                   counts=[list(c) for c in counts])

    def fast_path_equivalence() -> CheckReport:
        worst = []
        for m in (resolution, 2 * resolution):
            mat = material if m == resolution else suite_material(seed, m, n)
            solver = CellSolver(mat, settings)
            _, stiffness = build_fast_path(mat, K_rotation, [0.5] * n, solver).evaluate(fast_points)
            gaps = []
            for x, C in zip(fast_points, stiffness):
                K = K_rotation(x)
                gaps.append(_relative(C, effective_elasticity_at(mat, K, K, solver).entries))
            worst.append(max(gaps))
        report = CheckReport.compare("law.fast_path_equivalence", worst[-1], tolerance("law.fast_path_equivalence"),
                                     "DERIVED: per-point cell solves at H = K on two nested resolutions",
                                     resolutions=[resolution, 2 * resolution], gaps=worst)
        if report.passed and not gap_shrinks(worst[0], worst[1]):
            report.status = "fail"
        return report

    def uniformity() -> CheckReport:
        stretch = np.diag([1.2, 0.9] + [1.0] * (n - 2))
        K_field = make_transform_field({"type": "rotation", "gradient": gradient.tolist(),
                                        "stretch": stretch.tolist()}, n)
        law = build_fast_path(material, K_field, [0.5] * n, CellSolver(material, settings))
        gaps = []
        for (x1, x2), E in zip(point_pairs, strains * 2):
            N = anisotropy_transport(K_field, x2, x1).entries
            lhs = effective_stress(law, E, x1).entries
            rhs = N @ effective_stress(law, N.T @ E @ N, x2).entries @ N.T
            gaps.append(_relative(lhs, rhs))
        return CheckReport.compare("law.material_uniformity", max(gaps), tolerance("law.material_uniformity"),
                                   "DERIVED: transport of the effective law between points", gaps=gaps)

    def residual_irrelevance() -> CheckReport:
        K = np.array([[1.2, 0.1], [0.0, 0.9]]) if n == 2 else np.diag([1.2, 0.9, 1.1])
        law = build_fast_path(material, constant_field(K, n), [0.5] * n, CellSolver(material, settings))
        mesh = build_macro_mesh(Box.unit(n), 8)
        body = {"type": "sine", "amplitude": [1.0] * n}
        with_residual = solve_homogenized(build_problem(mesh, None, body, law, include_residual=True))
        without = solve_homogenized(build_problem(mesh, None, body, law, include_residual=False))
        residual, _ = law.evaluate(np.full((1, n), 0.5))
        return CheckReport.compare("macro.residual_irrelevance", _relative(with_residual.values, without.values),
                                   EXACT_TOLERANCE, "TRIVIAL: a constant residual stress is divergence free",
                                   residual_norm=float(np.linalg.norm(residual[0])))

    def bounds() -> CheckReport:
        computed = mandel_matrix(canonical_stiffness(material, CellSolver(material, settings)))
        upper, lower = (mandel_matrix(t) for t in voigt_bounds(material))
        scale = float(np.max(np.abs(upper)))
        gaps = [float(np.linalg.eigvalsh(0.5 * (d + d.T))[0]) for d in (upper - computed, computed - lower)]
        return CheckReport.compare("law.voigt_reuss_bounds", max(0.0, -min(gaps)) / scale, EXACT_TOLERANCE,
                                   "TRIVIAL: effective stiffness between harmonic and arithmetic means")

    checks: Dict[str, CheckFunction] = {
        "cell.constant_stiffness": constant_stiffness,
        "cell.laminate_off_grid": off_grid_laminate,
        "cell.linearity": linearity,
        "cell.skew_strain_zero": skew_strain,
        "cell.zero_mean": zero_mean,
        "law.effective_symmetry": effective_symmetry,
        "law.fast_path_canonical_count": fast_path_count,
        "law.fast_path_equivalence": fast_path_equivalence,
        "law.k_orthogonal_zero_residual": orthogonal_residual,
        "law.material_uniformity": uniformity,
        "law.voigt_reuss_bounds": bounds,
        "macro.residual_irrelevance": residual_irrelevance,
        "tensor.composition": composition,
        "tensor.symmetry.coercivity_inheritance": coercivity_inheritance,
        "tensor.symmetry.preservation": symmetry_preservation,
    }
    reports = _run_all(checks, jobs)
    failed = [r.check_id for r in reports if not r.passed]
    logger.info(f"Invariant suite: {len(reports) - len(failed)}/{len(reports)} passed",
                extra={"seed": seed, "failed": failed})
    return reports


ACCEPTANCE_DEFAULTS: Dict[str, Any] = {
    "epsilons": [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0],
    "r": 0.6,
    "resolution": 32,
    "moduli": [[10.0, 10.0], [1.0, 1.0]],
    "rotation_gradient": [0.8, 0.4],
    "max_resolution": 512,
    "time_budget_seconds": 900.0,
    "final_ratio": 0.5,
    "h1_band": 1.5,
    "floor": 1e-8,
}


def acceptance_setups(options: Dict[str, Any]) -> Dict[str, ConvergenceSetup]:
    """The single-phase, laminate and rotated-laminate setups on the unit square."""
    n = 2
    phases = _isotropic_phases([tuple(m) for m in options["moduli"]], n)
    m = int(options["resolution"])
    laminate = _laminate_material(phases, m, 0.5, 0)
    single = assign_phases(build_cell_mesh(n, m), {"type": "homogeneous"}, phases[:1])
    identity = constant_field(np.eye(n), n)
    rotating = make_transform_field({"type": "rotation", "gradient": list(options["rotation_gradient"])}, n)
    settings = SolverSettings.from_config()

    def setup(material: CellMaterial, field: TransformField) -> ConvergenceSetup:
        law = build_fast_path(material, field, [0.5] * n, CellSolver(material, settings), H_field=field)
        return ConvergenceSetup(material=material, H_field=field, K_field=field, law=law, domain=Box.unit(n),
                                r=float(options["r"]), body_force={"type": "sine", "amplitude": [0.0, -1.0]},
                                max_resolution=int(options["max_resolution"]),
                                time_budget_seconds=options.get("time_budget_seconds"))

    return {
        "laminate_identity": setup(laminate, identity),
        "laminate_rotation": setup(laminate, rotating),
        "single_phase": setup(single, identity),
    }


def _ladder_reports(name: str, report: ConvergenceReport, options: Dict[str, Any]) -> List[CheckReport]:
    inconclusive = report.budget_exceeded
    provenance = "DERIVED: direct against homogenized solves along the epsilon ladder"

    def make(check: str, measured: Optional[float], tolerance: float) -> CheckReport:
        check_id = f"converge.{name}.{check}"
        if inconclusive or measured is None:
            return CheckReport(check_id, "inconclusive", math.nan, tolerance, provenance,
                               details={"status": report.status})
        return CheckReport.compare(check_id, measured, tolerance, provenance, rows=len(report.rows))

    if name == "single_phase":
        errors = [row["relative_l2_error"] for row in report.rows]
        return [make("floor", max(errors) if errors else None, float(options["floor"]))]

    frame = report.to_frame()
    errors = frame["l2_error"].to_numpy()
    increases = float(np.sum(np.diff(errors) >= 0.0)) if errors.size >= 2 else None
    ratio = float(errors[-1] / errors[0]) if errors.size >= 2 and errors[0] > 0.0 else None
    return [
        make("final_ratio", ratio, float(options["final_ratio"])),
        make("h1_band", report.norm_band(), float(options["h1_band"])),
        make("monotone", increases, 0.0),
    ]


def run_convergence_acceptance(config: Optional[Dict[str, Any]] = None, jobs: Optional[int] = None,
                               setups: Optional[Sequence[str]] = None) -> List[CheckReport]:
    """Convergence ladders with pass/fail on monotone decrease, final error and the H1 band."""
    options = dict(ACCEPTANCE_DEFAULTS, **(config or {}))
    built = acceptance_setups(options)
    reports: List[CheckReport] = []
    for name in sorted(setups or built):
        start = time.perf_counter()
        try:
            study = convergence_study(built[name], options["epsilons"], jobs)
        except BudgetExceededError as e:
            logger.warning(f"Convergence ladder '{name}' exceeded its budget: {e}")
            study = ConvergenceReport(status="budget_exceeded")
        for report in _ladder_reports(name, study, options):
            report.runtime_seconds = time.perf_counter() - start
            log_check_result(report.check_id, report.status, report.measured, report.tolerance)
            reports.append(report)
    return sorted(reports, key=lambda r: r.check_id)


def run_nonperiodic_diagnostic(epsilons: Sequence[float] = (1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0), r: float = 0.6,
                               slope: float = 0.2, resolution: int = 32,
                               samples_per_axis: int = 256) -> List[CheckReport]:
    """Locally periodic approximation of the nonperiodic field with L_x = (1 + slope x_1) I."""
    n = 2
    L_field = make_transform_field({"type": "scaling", "gradient": [slope, 0.0], "offset": 1.0}, n)
    identity = constant_field(np.eye(n), n)
    phases = _isotropic_phases([(10.0, 10.0), (1.0, 1.0)], n)
    material = _laminate_material(phases, resolution, 0.5, 0)
    box = Box.unit(n)

    def jacobian() -> CheckReport:
        points = np.array([[0.1, 0.2], [0.5, 0.5], [0.9, 0.3], [0.3, 0.8]])
        s = 1.0 + slope * points[:, 0]
        analytic = np.zeros((len(points), n, n))
        analytic[:, 0, 0] = analytic[:, 1, 1] = 1.0 / s
        analytic[:, :, 0] -= slope * points / (s ** 2)[:, None]
        expected = np.linalg.inv(analytic)
        return CheckReport.compare("micro.derived_H_jacobian", _relative(derive_H_from_L(L_field, points), expected),
                                   1e-8, "DERIVED: analytic gradient of L_x^-1 x")

    def gap() -> CheckReport:
        H_field = derived_H_field(L_field)
        gaps = []
        for eps in sorted(epsilons, reverse=True):
            decomposition = align_to_nonperiodic(decompose(box, eps, r), L_field, H_field)
            micro = synth_microstructure(material, H_field, identity, decomposition)
            reference = nonperiodic_field(material, L_field, identity, eps)
            gaps.append(nonperiodic_gap(micro, reference, samples_per_axis))
        increases = float(np.sum(np.diff(gaps) >= 0.0))
        # Choosing M = L instead would give K = L, which differs from the derived H
        samples = np.stack(np.meshgrid(*[np.linspace(0.05, 0.95, 8)] * n, indexing="ij"), axis=-1).reshape(-1, n)
        H_samples = H_field(samples)
        L_samples = L_field(samples)
        m_equals_l_defect = float(np.max(np.linalg.norm(H_samples - L_samples, axis=(1, 2))
                                         / np.linalg.norm(L_samples, axis=(1, 2))))
        return CheckReport.compare("micro.nonperiodic_gap", increases, 0.0,
                                   "DERIVED: sampled coefficient gap along the epsilon ladder",
                                   epsilons=sorted(epsilons, reverse=True), gaps=gaps,
                                   m_equals_l_defect=m_equals_l_defect)

    return _run_all({"micro.derived_H_jacobian": jacobian, "micro.nonperiodic_gap": gap}, 1)


def reports_frame(reports: Sequence[CheckReport]) -> pd.DataFrame:
    """Report table without runtimes, so reruns compare byte for byte."""
    rows = [{"check_id": r.check_id, "status": r.status, "measured": r.measured, "tolerance": r.tolerance,
             "provenance": r.provenance} for r in sorted(reports, key=lambda r: r.check_id)]
    return pd.DataFrame(rows, columns=["check_id", "status", "measured", "tolerance", "provenance"])


def run_determinism_check(jobs: Optional[int] = None) -> CheckReport:
    """Run the laminate oracle twice and compare the report tables."""
    start = time.perf_counter()
    first = reports_frame(run_laminate_oracle(resolutions=(8, 16), jobs=jobs)).to_csv(float_format="%.12e")
    second = reports_frame(run_laminate_oracle(resolutions=(8, 16), jobs=jobs)).to_csv(float_format="%.12e")
    report = CheckReport.compare("determinism.laminate_oracle", 0.0 if first == second else 1.0, 0.0,
                                 "TRIVIAL: identical reruns give identical tables")
    report.runtime_seconds = time.perf_counter() - start
    log_check_result(report.check_id, report.status, report.measured, report.tolerance)
    return report


def traceability_table(reports: Optional[Sequence[CheckReport]] = None) -> pd.DataFrame:
    """Acceptance criteria against the check ids covering them, with their status when reports are given."""
    status = {r.check_id: r.status for r in reports or []}
    rows = []
    for criterion, (title, check_ids) in sorted(ACCEPTANCE_CRITERIA.items()):
        for check_id in check_ids:
            rows.append({"criterion": criterion, "title": title, "check_id": check_id,
                         "status": status.get(check_id, "not_run")})
    return pd.DataFrame(rows, columns=["criterion", "title", "check_id", "status"])


def export_csv(reports: Sequence[CheckReport], path: Path) -> Path:
    return write_csv(reports_frame(reports), path)


def export_junit(reports: Sequence[CheckReport], path: Path, suite_name: str = "locper-verify") -> Path:
    """JUnit XML with one testcase per check; inconclusive checks are reported as skipped."""
    ordered = sorted(reports, key=lambda r: r.check_id)
    suite = ElementTree.Element("testsuite", {
        "name": suite_name,
        "tests": str(len(ordered)),
        "failures": str(sum(r.status == "fail" for r in ordered)),
        "skipped": str(sum(r.status == "inconclusive" for r in ordered)),
        "time": f"{sum(r.runtime_seconds for r in ordered):.3f}",
    })
    for r in ordered:
        group, _, name = r.check_id.partition(".")
        case = ElementTree.SubElement(suite, "testcase", {"classname": group, "name": name or group,
                                                          "time": f"{r.runtime_seconds:.3f}"})
        message = f"measured={r.measured:.6e} tolerance={r.tolerance:.6e} ({r.provenance})"
        if r.status == "fail":
            ElementTree.SubElement(case, "failure", {"message": message})
        elif r.status == "inconclusive":
            ElementTree.SubElement(case, "skipped", {"message": message})
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ElementTree.ElementTree(suite).write(path, encoding="utf-8", xml_declaration=True)
    return path


def run_verification(seed: int = 0, include_convergence: bool = False,
                     convergence_config: Optional[Dict[str, Any]] = None,
                     jobs: Optional[int] = None, discretization_tolerance: Optional[float] = None,
                     resolution: int = 32) -> List[CheckReport]:
    """Laminate oracle, invariant suite, nonperiodic diagnostic and determinism; optionally the ladders."""
    reports = run_laminate_oracle(jobs=jobs)
    reports += run_invariant_suite(seed, discretization_tolerance=discretization_tolerance,
                                   resolution=resolution, jobs=jobs)
    reports += run_nonperiodic_diagnostic()
    reports.append(run_determinism_check(jobs))
    if include_convergence:
        reports += run_convergence_acceptance(convergence_config, jobs)
    return sorted(reports, key=lambda r: r.check_id)
