"""
Main CLI entry point for the homogenization toolkit.
"""

import argparse
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from shared.config import create_default_config_file, get_config, load_run_config
from shared.logging_config import get_logger, log_task_complete, log_task_error, log_task_start, setup_logging
from locper_homog import __version__
from locper_homog.exceptions import AcceptanceError, ConfigError, LocperError
from locper_homog.models.cell import CellMaterial
from locper_homog.models.fields import TransformField, make_transform_field
from locper_homog.models.grid import Box
from locper_homog.models.law import EffectiveLaw
from locper_homog.models.run_config import RunConfig
from locper_homog.services.artifacts import dump_array, write_csv, write_json, write_manifest
from locper_homog.services.cell_domain import build_cell_material, export_voxels
from locper_homog.services.cell_solver import CellSolver, SolverSettings, export_strain_csv
from locper_homog.services.effective_law import (
    build_law,
    build_law_table,
    effective_elasticity_at,
    effective_residual_at,
    export_law,
    import_law,
    law_frame,
    voigt_bounds,
)
from locper_homog.services.fem_macro import (
    ConvergenceSetup,
    build_macro_mesh,
    build_problem,
    convergence_study,
    export_convergence_csv,
    export_displacement,
    field_norms,
    plot_convergence,
    required_resolution,
    solve_direct,
    solve_homogenized,
)
from locper_homog.services.micro_synth import (
    align_to_nonperiodic,
    decompose,
    export_micro_voxels,
    synth_microstructure,
)
from locper_homog.services.tensor_core import check_symmetries, coercivity_constant
from locper_homog.services.verify import export_csv, export_junit, run_verification, traceability_table

logger = get_logger(__name__)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main CLI entry point."""
    parser = argparse.ArgumentParser(
        description="Homogenization of locally periodic elastic media with residual stress",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  locper-homog cell --config run.json          # Correctors and effective tensors at one (H, K)
  locper-homog homogenize --config run.json    # Effective law and homogenized macro solve
  locper-homog direct --config run.json        # Fully resolved solve at scale epsilon
  locper-homog converge --config run.json      # Errors along the epsilon ladder
  locper-homog verify                          # Oracles and invariant suite
        """
    )

    parser.add_argument(
        "--version",
        action="version",
        version=f"locper-homogenization {__version__}"
    )

    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    for name, help_text in (
        ("cell", "Solve cell problems at one (H, K)"),
        ("homogenize", "Build the effective law and solve the homogenized problem"),
        ("direct", "Solve the epsilon-resolved problem"),
        ("converge", "Run a convergence study"),
        ("verify", "Run the verification harness"),
    ):
        command_parser = subparsers.add_parser(name, help=help_text)
        command_parser.add_argument("--config", help="JSON run configuration")
        command_parser.add_argument("--output-dir", help="Override the output directory")
        command_parser.add_argument("--jobs", type=int, help="Worker threads")
        command_parser.add_argument("--log-level", help="Logging level")
        if name == "verify":
            command_parser.add_argument("--seed", type=int, help="Override the run seed")
            command_parser.add_argument("--with-convergence", action="store_true",
                                        help="Also run the convergence acceptance ladders")

    config_parser = subparsers.add_parser("configure", help="Configure application")
    config_parser.add_argument(
        "--create-config",
        action="store_true",
        help="Create default configuration file"
    )

    args = parser.parse_args(argv)

    setup_logging(level=getattr(args, "log_level", None))

    if not args.command:
        parser.print_help()
        return 0

    if args.command == "configure":
        if args.create_config:
            create_default_config_file()
        else:
            print("Use --create-config to create default configuration file")
        return 0

    task_id = f"{args.command}-{int(time.time())}"
    start = time.perf_counter()
    try:
        run = _load_run(args.config)
        output_dir = _output_dir(run, args.output_dir, args.command)
        log_task_start(task_id, args.command, output_dir=str(output_dir))

        if args.command == "cell":
            cmd_cell(run, output_dir)
        elif args.command == "homogenize":
            cmd_homogenize(run, output_dir, args.jobs)
        elif args.command == "direct":
            cmd_direct(run, output_dir)
        elif args.command == "converge":
            cmd_converge(run, output_dir, args.jobs)
        elif args.command == "verify":
            cmd_verify(run, output_dir, args.jobs, args.seed, args.with_convergence)

        log_task_complete(task_id, args.command, time.perf_counter() - start)
        return 0

    except LocperError as e:
        log_task_error(task_id, args.command, e)
        print(f"❌ {type(e).__name__}: {e}")
        return e.exit_code
    except Exception as e:
        log_task_error(task_id, args.command, e)
        print(f"❌ Error: {e}")
        return 1


def _load_run(path: Optional[str]) -> RunConfig:
    if path is None:
        return RunConfig.from_dict({})
    config_path = Path(path)
    if not config_path.exists():
        raise ConfigError(f"run configuration not found: {config_path}")
    try:
        data = load_run_config(config_path)
    except ValueError as e:
        raise ConfigError(f"{config_path} is not valid JSON: {e}") from e
    return RunConfig.from_dict(data)


def _output_dir(run: RunConfig, override: Optional[str], command: str) -> Path:
    base = Path(override or run.output_dir or get_config()["output"]["directory"])
    return base / command


def _float_format() -> str:
    return str(get_config().get("output", {}).get("float_format", "%.12e"))


def _setting(section: str, key: str, value: Any = None) -> Any:
    """Run value when given, else the application config entry."""
    return value if value is not None else get_config()[section][key]


def _domain_center(run: RunConfig) -> List[float]:
    box = Box.from_dict(run.macro.domain)
    return (0.5 * (box.lower + box.upper)).tolist()


def _solver_settings(run: RunConfig) -> SolverSettings:
    section = dict(get_config().get("solver", {}))
    section.update(run.solver.overrides())
    return SolverSettings.from_config({"solver": section})


def _material(run: RunConfig) -> CellMaterial:
    resolution = int(_setting("cell", "resolution", run.material.resolution))
    return build_cell_material(run.dimension, resolution, run.material.geometry,
                               run.material.phases)


def _fields(run: RunConfig) -> Tuple[TransformField, TransformField]:
    """H and K fields; H defaults to K."""
    K_field = make_transform_field(run.fields.get("K"), run.dimension)
    H_descriptor = run.fields.get("H")
    H_field = K_field if H_descriptor is None else make_transform_field(H_descriptor, run.dimension)
    return H_field, K_field


def _law(run: RunConfig, material: CellMaterial, solver: CellSolver, H_field: TransformField,
         K_field: TransformField, jobs: Optional[int]) -> EffectiveLaw:
    if run.macro.law_file:
        return import_law(Path(run.macro.law_file), material, solver)
    section = run.homogenize
    base_point = section.base_point or _domain_center(run)
    if section.strategy == "table" and section.check_points is not None:
        return build_law_table(material, H_field, K_field, section.axes, solver,
                               check_points=np.array(section.check_points), jobs=jobs)
    return build_law(material, H_field, K_field, section.strategy, solver, base_point, section.axes, jobs,
                     domain=Box.from_dict(run.macro.domain))


def _manifest(output_dir: Path, command: str, run: RunConfig, outputs: Dict[str, Any]) -> None:
    write_manifest(output_dir, command, run.to_dict(), get_config(), outputs)


def cmd_cell(run: RunConfig, output_dir: Path) -> Dict[str, Any]:
    """Correctors and effective quantities at one (H, K)."""
    n = run.dimension
    material = _material(run)
    solver = CellSolver(material, _solver_settings(run))
    K = np.array(run.cell.K) if run.cell.K is not None else np.eye(n)
    H = np.array(run.cell.H) if run.cell.H is not None else K

    print(f"🔄 Solving cell problems on {material.mesh.num_elements} elements...")
    stiffness = effective_elasticity_at(material, H, K, solver)
    residual = effective_residual_at(material, H, K, solver)
    symmetry = check_symmetries(stiffness)
    upper, lower = voigt_bounds(material)

    outputs: Dict[str, Any] = {"effective": "effective.json"}
    for i, strain in enumerate(run.cell.strains):
        corrector = solver.solve_corrector_E(H, K, strain)
        header = dump_array(corrector.values, output_dir / f"corrector_{i}", corrector.to_dict())
        outputs[f"corrector_{i}"] = header.name
        if run.cell.export_strain:
            path = export_strain_csv(solver, corrector, H, strain, output_dir / f"strain_{i}.csv", _float_format())
            outputs[f"strain_{i}"] = path.name
    residual_corrector = solver.solve_corrector_residual(H, K)
    outputs["residual_corrector"] = dump_array(residual_corrector.values, output_dir / "residual_corrector",
                                               residual_corrector.to_dict()).name
    outputs["phases"] = export_voxels(material, output_dir / "phases.json")[0].name

    result = {
        "H": H.tolist(),
        "K": K.tolist(),
        "C_hom": stiffness.to_voigt().tolist(),
        "S_r_hom": residual.to_voigt().tolist(),
        "coercivity": coercivity_constant(stiffness),
        "symmetry": symmetry.to_dict(),
        "voigt_bound": upper.to_voigt().tolist(),
        "reuss_bound": lower.to_voigt().tolist(),
        "volume_fractions": material.volume_fractions.tolist(),
        "solver_counters": dict(solver.counters),
    }
    write_json(result, output_dir / "effective.json")
    _manifest(output_dir, "cell", run, outputs)

    print(f"✅ Effective tensor written to {output_dir / 'effective.json'}")
    print(f"   Coercivity constant: {result['coercivity']:.6e}")
    print(f"   |S_r,hom|: {residual.norm():.6e}")
    return result


def cmd_homogenize(run: RunConfig, output_dir: Path, jobs: Optional[int] = None) -> Dict[str, Any]:
    """Effective law over the domain plus the homogenized macroscopic solve."""
    material = _material(run)
    solver = CellSolver(material, _solver_settings(run))
    H_field, K_field = _fields(run)

    print(f"🔄 Building {run.homogenize.strategy} law...")
    law = _law(run, material, solver, H_field, K_field, jobs)
    resolution = int(_setting("macro", "resolution", run.macro.resolution))
    mesh = build_macro_mesh(Box.from_dict(run.macro.domain), resolution)
    problem = build_problem(mesh, run.macro.boundary, run.macro.body_force, law, run.macro.include_residual)
    print(f"🔄 Solving homogenized problem on {mesh.num_elements} elements...")
    u = solve_homogenized(problem)

    law_path = export_law(law, output_dir / "law.json")
    write_csv(law_frame(law), output_dir / "law.csv", _float_format())
    export_displacement(u, output_dir / "displacement.csv", _float_format())
    dump_array(u.values, output_dir / "displacement", u.to_dict())
    norms = field_norms(u)
    write_json({"norms": norms, "law": {"strategy": law.strategy, "metadata": law.metadata},
                "solver_counters": dict(solver.counters)}, output_dir / "summary.json")
    _manifest(output_dir, "homogenize", run, {"law": law_path.name, "displacement": "displacement.csv",
                                              "summary": "summary.json"})

    print(f"✅ Law written to {law_path}")
    print(f"   Canonical solves: {solver.counters['canonical']}, assemblies: {solver.counters['assemblies']}")
    print(f"   |u|_L2 = {norms['l2']:.6e}, |u|_H1 = {norms['h1']:.6e}")
    return {"law": law, "displacement": u, "norms": norms}


def cmd_direct(run: RunConfig, output_dir: Path) -> Dict[str, Any]:
    """Epsilon-resolved solve with the micro field sampled at Gauss points."""
    material = _material(run)
    H_field, K_field = _fields(run)
    box = Box.from_dict(run.macro.domain)
    section = run.direct

    if section.anchor_rule == "aligned":
        if "L" not in run.fields:
            raise ConfigError("direct.anchor_rule 'aligned' needs fields.L")
        L_field = make_transform_field(run.fields["L"], run.dimension)
        decomposition = align_to_nonperiodic(decompose(box, section.epsilon, section.r), L_field, H_field)
    else:
        decomposition = decompose(box, section.epsilon, section.r, section.anchor_rule)
    micro = synth_microstructure(material, H_field, K_field, decomposition)

    per_period = int(_setting("macro", "elements_per_period", section.elements_per_period))
    counts = section.resolution or required_resolution(box, section.epsilon, per_period)
    mesh = build_macro_mesh(box, counts)
    print(f"🔄 Direct solve at epsilon={section.epsilon} on {mesh.num_elements} elements "
          f"({decomposition.num_patches} patches)...")
    u = solve_direct(build_problem(mesh, run.macro.boundary, run.macro.body_force), micro, section.epsilon,
                     per_period)

    export_displacement(u, output_dir / "displacement.csv", _float_format())
    dump_array(u.values, output_dir / "displacement", u.to_dict())
    voxels = export_micro_voxels(micro, mesh.counts, output_dir / "micro")
    norms = field_norms(u)
    write_json({"norms": norms, "micro": micro.to_dict(), "mesh": mesh.to_dict()}, output_dir / "summary.json")
    _manifest(output_dir, "direct", run, {"displacement": "displacement.csv", "summary": "summary.json",
                                          "micro_voxels": [h.name for h in voxels]})

    print(f"✅ Direct solution written to {output_dir / 'displacement.csv'}")
    print(f"   |u|_L2 = {norms['l2']:.6e}, |u|_H1 = {norms['h1']:.6e}")
    return {"displacement": u, "norms": norms}


def cmd_converge(run: RunConfig, output_dir: Path, jobs: Optional[int] = None) -> Dict[str, Any]:
    """Direct against homogenized errors along the epsilon ladder."""
    material = _material(run)
    solver = CellSolver(material, _solver_settings(run))
    H_field, K_field = _fields(run)
    law = _law(run, material, solver, H_field, K_field, jobs)
    section = run.converge
    setup = ConvergenceSetup.with_config_defaults(
        material=material, H_field=H_field, K_field=K_field, law=law, domain=Box.from_dict(run.macro.domain),
        r=section.r, boundary=run.macro.boundary, body_force=run.macro.body_force,
        anchor_rule=section.anchor_rule, max_resolution=section.max_resolution,
        time_budget_seconds=section.time_budget_seconds,
    )

    print(f"🔄 Convergence study over epsilon = {section.epsilons}...")
    report = convergence_study(setup, section.epsilons, jobs)
    csv_path = export_convergence_csv(report, output_dir / "convergence.csv", _float_format())
    write_json(report.to_dict(), output_dir / "convergence.json")
    outputs = {"table": csv_path.name, "report": "convergence.json"}
    if section.plot or get_config()["output"].get("plots", False):
        outputs["plot"] = plot_convergence(report, output_dir / "convergence.html").name
    _manifest(output_dir, "converge", run, outputs)

    print(f"✅ Convergence table written to {csv_path}")
    for row in report.to_frame().itertuples():
        print(f"   eps={row.epsilon:.5f}  N={row.resolution:4d}  L2={row.l2_error:.4e}  H1={row.h1_error:.4e}")
    if report.budget_exceeded:
        print("⚠️  Budget exceeded: the table is partial")
    elif len(report.rows) >= 2:
        print(f"   Monotone L2 decrease: {'yes' if report.is_monotone() else 'no'}")
    return {"report": report}


def cmd_verify(run: RunConfig, output_dir: Path, jobs: Optional[int] = None, seed: Optional[int] = None,
               with_convergence: bool = False) -> List[Any]:
    """Oracles, invariant suite and diagnostics; exits with code 4 when a check fails."""
    section = run.verify
    seed = run.seed if seed is None else seed
    print(f"🔄 Running verification (seed={seed})...")
    reports = run_verification(seed, with_convergence or section.include_convergence, section.acceptance, jobs,
                               section.discretization_tolerance, section.resolution)

    export_csv(reports, output_dir / "checks.csv")
    export_junit(reports, output_dir / "checks.xml")
    write_csv(traceability_table(reports), output_dir / "traceability.csv")
    write_json({"reports": [r.to_dict() for r in reports]}, output_dir / "checks.json")
    _manifest(output_dir, "verify", run, {"checks": "checks.csv", "junit": "checks.xml",
                                          "traceability": "traceability.csv"})

    for r in reports:
        icon = {"pass": "✅", "fail": "❌", "inconclusive": "⚠️ "}[r.status]
        print(f"{icon} {r.check_id:45s} measured={r.measured:.3e} tolerance={r.tolerance:.1e}")
    failed = [r.check_id for r in reports if r.status == "fail"]
    passed = sum(r.passed for r in reports)
    print(f"📊 {passed}/{len(reports)} checks passed")
    if failed:
        raise AcceptanceError(f"{len(failed)} check(s) failed: {', '.join(failed)}")
    return reports


if __name__ == "__main__":
    sys.exit(main())
