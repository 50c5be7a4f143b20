"""
Contract tests for homogenized law construction.

The laminate is checked against its closed form; the fast path must agree
with exact cell solves wherever H = K.
"""

import numpy as np
import pytest

from locper_homog.exceptions import ConfigError, SingularTransformError
from locper_homog.models.fields import TransformField, constant_field, make_transform_field
from locper_homog.models.grid import Box
from locper_homog.models.law import FastPathLaw, SampledLaw, TableLaw
from locper_homog.models.tensor import Tensor2
from locper_homog.services.cell_solver import CellSolver
from locper_homog.services.effective_law import (
    anisotropy_transport,
    build_fast_path,
    build_law,
    build_law_table,
    canonical_stiffness,
    effective_elasticity_at,
    effective_residual_at,
    effective_residual_for_K,
    effective_stress,
    export_law,
    import_law,
    law_frame,
    material_uniformity,
    pushforward_effective,
    voigt_bounds,
)
from locper_homog.services.fem_macro import build_macro_mesh, build_problem, solve_homogenized
from locper_homog.services.tensor_core import mandel_matrix, rotation
from locper_homog.services.verify import laminate_closed_form

ROTATING = {"type": "rotation", "gradient": [0.8, 0.4]}
STRETCHED = {"type": "rotation", "gradient": [0.5, -0.3], "stretch": [[1.1, 0.0], [0.0, 0.95]]}


class TestCellAverages:
    """Tests for the effective tensors of single frames."""

    def test_homogeneous_cell_returns_phase_stiffness(self, homogeneous_material, stiff_phase, direct_settings):
        solver = CellSolver(homogeneous_material, direct_settings)
        assert canonical_stiffness(homogeneous_material, solver).allclose(stiff_phase.stiffness, rtol=1e-12)

    def test_laminate_matches_closed_form(self, laminate_material, laminate_solver, stiff_phase, soft_phase):
        expected = laminate_closed_form([stiff_phase.stiffness, soft_phase.stiffness], [0.5, 0.5], axis=0)
        assert canonical_stiffness(laminate_material, laminate_solver).allclose(expected, rtol=1e-8)

    def test_identity_frame_is_canonical(self, inclusion_material, inclusion_solver):
        framed = effective_elasticity_at(inclusion_material, np.eye(2), np.eye(2), inclusion_solver)
        assert framed.allclose(canonical_stiffness(inclusion_material, inclusion_solver), rtol=1e-10)

    def test_h_equal_k_is_pushforward_of_canonical(self, inclusion_material, inclusion_solver):
        K = Tensor2([[1.1, 0.3], [-0.2, 0.9]])
        exact = effective_elasticity_at(inclusion_material, K, K, inclusion_solver)
        pushed = pushforward_effective(canonical_stiffness(inclusion_material, inclusion_solver), K)
        assert exact.allclose(pushed, rtol=1e-8)

    def test_stiffness_lies_between_bounds(self, inclusion_material, inclusion_solver):
        upper, lower = voigt_bounds(inclusion_material)
        effective = mandel_matrix(canonical_stiffness(inclusion_material, inclusion_solver))
        assert np.linalg.eigvalsh(mandel_matrix(upper) - effective).min() > -1e-9
        assert np.linalg.eigvalsh(effective - mandel_matrix(lower)).min() > -1e-9

    def test_residual_vanishes_for_rotations(self, inclusion_material, inclusion_solver):
        residual = effective_residual_at(inclusion_material, rotation(0.4), rotation(0.4), inclusion_solver)
        assert np.allclose(residual.entries, 0.0, atol=1e-12)

    def test_residual_for_stretch_agrees_with_h_equal_k_route(self, inclusion_material, inclusion_solver):
        K = np.diag([1.1, 0.95])
        framed = effective_residual_at(inclusion_material, K, K, inclusion_solver)
        direct = effective_residual_for_K(inclusion_material, K, inclusion_solver)
        assert np.abs(framed.entries).max() > 0.0
        assert framed.allclose(direct, rtol=1e-8)

    def test_singular_transport(self, stiff_phase):
        with pytest.raises(SingularTransformError):
            pushforward_effective(stiff_phase.stiffness, Tensor2([[1.0, 2.0], [0.5, 1.0]]))


class TestTransport:
    """Tests for material_uniformity and anisotropy_transport."""

    def test_rotations_commute(self):
        field = make_transform_field(ROTATING, 2)
        M = material_uniformity(field, [0.1, 0.2], [0.6, 0.9])
        N = anisotropy_transport(field, [0.1, 0.2], [0.6, 0.9])
        assert np.allclose(M.entries, N.entries)

    def test_transport_maps_between_points(self, laminate_material, laminate_solver):
        field = make_transform_field(STRETCHED, 2)
        x1, x2 = [0.2, 0.1], [0.7, 0.8]
        c1 = effective_elasticity_at(laminate_material, field.value(np.array(x1)), field.value(np.array(x1)),
                                     laminate_solver)
        c2 = effective_elasticity_at(laminate_material, field.value(np.array(x2)), field.value(np.array(x2)),
                                     laminate_solver)
        assert pushforward_effective(c1, anisotropy_transport(field, x1, x2)).allclose(c2, rtol=1e-8)


class TestLawStrategies:
    """Tests for the fast path, table and pointwise laws."""

    def test_fast_path_agrees_with_exact_solves(self, laminate_material, laminate_solver):
        field = make_transform_field(STRETCHED, 2)
        law = build_fast_path(laminate_material, field, [0.0, 0.0], laminate_solver)
        assert isinstance(law, FastPathLaw)
        for x in ([0.3, 0.7], [0.9, 0.1]):
            K = field.value(np.array(x))
            residual, stiffness = law.at(x)
            assert stiffness.allclose(effective_elasticity_at(laminate_material, K, K, laminate_solver), rtol=1e-8)
            assert residual.allclose(effective_residual_at(laminate_material, K, K, laminate_solver), rtol=1e-8)

    def test_fast_path_needs_h_equal_k(self, laminate_material, laminate_solver):
        with pytest.raises(ConfigError, match="H = K"):
            build_fast_path(laminate_material, constant_field(np.eye(2)), [0.0, 0.0], laminate_solver,
                            H_field=constant_field(2.0 * np.eye(2)))

    def test_fast_path_checks_h_equal_k_across_the_domain(self, laminate_material, laminate_solver):
        K = make_transform_field(STRETCHED, 2)
        H = TransformField(2, lambda pts: K(pts) * (1.0 + (pts[:, 0] - 0.5))[:, None, None], {"type": "custom"})
        assert np.allclose(H([0.5, 0.5]), K([0.5, 0.5]))
        with pytest.raises(ConfigError, match=r"H = K.*x=\[0\.0, 0\.0\]"):
            build_fast_path(laminate_material, K, [0.5, 0.5], laminate_solver, H_field=H)
        shifted = Box.from_dict({"lower": [2.0, 0.0], "upper": [3.0, 1.0]})
        with pytest.raises(ConfigError, match=r"x=\[2\.0, 0\.0\]"):
            build_law(laminate_material, H, K, "fast_path", laminate_solver, base_point=[2.5, 0.5], domain=shifted)

    def test_table_is_exact_at_nodes(self, laminate_material, laminate_solver):
        H = make_transform_field({"type": "shear", "gradient": [0.2, 0.0]}, 2)
        K = make_transform_field(ROTATING, 2)
        law = build_law_table(laminate_material, H, K, [[0.0, 1.0], [0.0, 1.0]], laminate_solver, jobs=1)
        assert isinstance(law, TableLaw)
        assert len(law.records) == 4
        assert law.metadata["interpolation_error"] >= 0.0
        for record in law.records:
            _, stiffness = law.at(record.point)
            assert stiffness.allclose(record.stiffness, rtol=1e-12)

    def test_table_refinement_reduces_interpolation_error(self, laminate_material, laminate_solver):
        K = make_transform_field(ROTATING, 2)
        points = np.array([[0.3, 0.7], [0.55, 0.15], [0.8, 0.45]])
        errors = []
        for samples in (5, 9):
            axes = [np.linspace(0.0, 1.0, samples)] * 2
            law = build_law_table(laminate_material, K, K, axes, laminate_solver, check_points=points, jobs=2)
            errors.append(law.metadata["interpolation_error"])
        assert errors[0] > 0.0
        assert errors[1] < errors[0]

    def test_table_clamps_outside_queries(self, laminate_material, laminate_solver):
        law = build_law_table(laminate_material, constant_field(np.eye(2)), constant_field(np.eye(2)),
                              [[0.0, 1.0], [0.0, 1.0]], laminate_solver, check_points=np.zeros((0, 2)), jobs=1)
        law.evaluate(np.array([[2.0, 0.5]]))
        assert law.extrapolated_points == 1

    def test_table_axes_are_validated(self, laminate_material, laminate_solver):
        with pytest.raises(ConfigError):
            build_law_table(laminate_material, constant_field(np.eye(2)), constant_field(np.eye(2)),
                            [[0.0, 1.0], [0.5]], laminate_solver)

    def test_pointwise_caches_by_frame(self, laminate_material, laminate_solver):
        identity = constant_field(np.eye(2))
        law = build_law(laminate_material, identity, identity, "pointwise", laminate_solver)
        law.evaluate(np.array([[0.1, 0.1], [0.5, 0.9], [0.7, 0.2]]))
        assert len(law.records) == 1

    def test_unknown_strategy(self, laminate_material, laminate_solver):
        identity = constant_field(np.eye(2))
        with pytest.raises(ConfigError, match="unknown law strategy"):
            build_law(laminate_material, identity, identity, "spline", laminate_solver)

    def test_effective_stress(self, homogeneous_material, stiff_phase):
        identity = constant_field(np.eye(2))
        law = build_law(homogeneous_material, identity, identity, "fast_path")
        E = np.array([[0.01, 0.0], [0.0, 0.0]])
        assert np.allclose(effective_stress(law, E, [0.5, 0.5]).entries, stiff_phase.stiffness(Tensor2(E)).entries)


class TestLawFiles:
    """Tests for export_law, import_law and law_frame."""

    def test_table_round_trip(self, laminate_material, laminate_solver, tmp_path):
        K = make_transform_field(ROTATING, 2)
        law = build_law_table(laminate_material, K, K, [[0.0, 1.0], [0.0, 1.0]], laminate_solver, jobs=1)
        again = import_law(export_law(law, tmp_path / "law.json"))
        assert isinstance(again, TableLaw)
        points = np.array([[0.25, 0.5], [0.8, 0.1]])
        assert np.allclose(again.evaluate(points)[1], law.evaluate(points)[1], rtol=0.0, atol=1e-12)

    def test_fast_path_round_trip_reproduces_the_macro_solve(self, laminate_material, laminate_solver, tmp_path):
        law = build_fast_path(laminate_material, make_transform_field(STRETCHED, 2), [0.5, 0.5], laminate_solver)
        mesh = build_macro_mesh({"lower": [0.0, 0.0], "upper": [1.0, 1.0]}, 8)
        body_force = {"type": "sine", "amplitude": [1.0, 0.5]}
        u = solve_homogenized(build_problem(mesh, None, body_force, law))
        assert np.abs(law.at([0.9, 0.2])[0].entries).max() > 0.0

        path = export_law(law, tmp_path / "law.json")
        again = import_law(path, laminate_material, laminate_solver)
        assert isinstance(again, FastPathLaw)
        assert again.metadata["source_strategy"] == "fast_path"
        u_again = solve_homogenized(build_problem(mesh, None, body_force, again))
        assert np.allclose(u_again.values, u.values, rtol=0.0, atol=1e-12)

    def test_fast_path_import_answers_from_the_residual_cache(self, laminate_material, laminate_solver, tmp_path):
        law = build_fast_path(laminate_material, make_transform_field(STRETCHED, 2), [0.5, 0.5], laminate_solver)
        points = np.array([[0.1, 0.2], [0.6, 0.9]])
        residual, stiffness = law.evaluate(points)

        again = import_law(export_law(law, tmp_path / "law.json"))
        assert isinstance(again, FastPathLaw)
        cached_residual, cached_stiffness = again.evaluate(points)
        assert np.allclose(cached_residual, residual, rtol=0.0, atol=1e-12)
        assert np.allclose(cached_stiffness, stiffness, rtol=0.0, atol=1e-12)
        with pytest.raises(ConfigError, match="no residual"):
            again.at([0.33, 0.44])

    def test_fast_path_with_custom_field_cannot_be_imported(self, laminate_material, laminate_solver, tmp_path):
        K = make_transform_field(ROTATING, 2)
        custom = TransformField(2, lambda pts: K(pts), {"type": "custom"})
        law = build_fast_path(laminate_material, custom, [0.2, 0.3], laminate_solver)
        path = export_law(law, tmp_path / "law.json")
        with pytest.raises(ConfigError, match="K field"):
            import_law(path)

    def test_records_without_grid_import_as_sampled_law(self, laminate_material, laminate_solver, tmp_path):
        identity = constant_field(np.eye(2))
        law = build_law(laminate_material, identity, identity, "pointwise", laminate_solver)
        law.at([0.4, 0.4])
        again = import_law(export_law(law, tmp_path / "law.json"))
        assert isinstance(again, SampledLaw)
        assert again.metadata["source_strategy"] == "pointwise"
        assert again.at([0.9, 0.9])[1].allclose(law.records[0].stiffness, rtol=1e-12)

    def test_law_frame_columns(self, homogeneous_material):
        identity = constant_field(np.eye(2))
        frame = law_frame(build_law(homogeneous_material, identity, identity, "fast_path"))
        assert len(frame) == 1
        assert {"x1", "x2", "S11", "C1111"} <= set(frame.columns)
