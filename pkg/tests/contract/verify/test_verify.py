"""
Contract tests for the verification harness.
"""

import math
from xml.etree import ElementTree

import numpy as np
import pandas as pd
import pytest

from locper_homog.models.report import CheckReport
from locper_homog.models.tensor import Tensor2
from locper_homog.services.tensor_core import make_isotropic
from locper_homog.services.verify import (
    ACCEPTANCE_CRITERIA,
    DISCRETIZATION_CHECKS,
    export_csv,
    export_junit,
    gap_shrinks,
    laminate_closed_form,
    laminate_residual_closed_form,
    reports_frame,
    run_convergence_acceptance,
    run_determinism_check,
    run_invariant_suite,
    run_laminate_oracle,
    run_nonperiodic_diagnostic,
    run_verification,
    traceability_table,
)

STIFF = make_isotropic(10.0, 10.0, 2)
SOFT = make_isotropic(1.0, 1.0, 2)


def _by_id(reports):
    return {r.check_id: r for r in reports}


class TestClosedForms:
    """Tests for the laminate closed forms."""

    def test_axis_normal_entry_is_harmonic_mean(self):
        # lambda + 2 mu is 30 and 3
        tensor = laminate_closed_form([STIFF, SOFT], [0.5, 0.5], axis=0)
        assert tensor.to_voigt()[0, 0] == pytest.approx(1.0 / (0.5 / 30.0 + 0.5 / 3.0), rel=1e-12)

    def test_in_plane_shear_is_harmonic_mean(self):
        tensor = laminate_closed_form([STIFF, SOFT], [0.25, 0.75], axis=1)
        assert tensor.to_voigt()[2, 2] == pytest.approx(1.0 / (0.25 / 10.0 + 0.75 / 1.0), rel=1e-12)

    def test_equal_layers_reproduce_the_phase(self):
        assert laminate_closed_form([STIFF, STIFF], [0.3, 0.7]).allclose(STIFF, rtol=1e-12)

    def test_fractions_must_sum_to_one(self):
        with pytest.raises(ValueError):
            laminate_closed_form([STIFF, SOFT], [0.5, 0.4])

    def test_equal_residuals_pass_through(self):
        residual = Tensor2([[0.2, 0.05], [0.05, -0.1]])
        computed = laminate_residual_closed_form([STIFF, SOFT], [residual, residual], [0.5, 0.5])
        assert computed.allclose(residual, rtol=1e-12)


class TestCheckSuites:
    """Tests for the oracle, the invariant suite and the diagnostics."""

    def test_laminate_oracle_on_grid_checks_pass(self):
        reports = _by_id(run_laminate_oracle(resolutions=(8, 16), jobs=1))
        for check_id in ("laminate.axis_normal_entry", "laminate.equal_phases", "laminate.residual_stress",
                         "laminate.tensor"):
            assert reports[check_id].passed, reports[check_id]
        assert reports["laminate.refinement_ratio"].details["resolutions"] == [8, 16]

    def test_invariant_suite(self):
        reports = _by_id(run_invariant_suite(seed=3, resolution=8, random_pairs=2, resolution_3d=4,
                                             discretization_tolerance=1.0, jobs=2))
        assert len(reports) == 15
        for check_id in ("tensor.composition", "tensor.symmetry.preservation",
                         "tensor.symmetry.coercivity_inheritance", "cell.skew_strain_zero",
                         "cell.constant_stiffness", "law.k_orthogonal_zero_residual",
                         "law.fast_path_canonical_count", "macro.residual_irrelevance"):
            assert reports[check_id].passed, reports[check_id]
        assert reports["law.fast_path_canonical_count"].details["counts"] == [[2, 3], [3, 6]]
        equivalence = reports["law.fast_path_equivalence"]
        assert equivalence.details["resolutions"] == [8, 16]
        assert len(equivalence.details["gaps"]) == 2
        assert equivalence.passed, equivalence
        for check_id in DISCRETIZATION_CHECKS:
            assert reports[check_id].tolerance == 1.0

    def test_gap_shrinks(self):
        assert gap_shrinks(1e-3, 4e-4)
        assert not gap_shrinks(1e-3, 8e-4)
        assert gap_shrinks(3e-14, 5e-14)

    def test_nonperiodic_jacobian(self):
        reports = _by_id(run_nonperiodic_diagnostic(epsilons=(0.25, 0.125), resolution=16, samples_per_axis=32))
        assert reports["micro.derived_H_jacobian"].passed
        assert len(reports["micro.nonperiodic_gap"].details["gaps"]) == 2
        assert reports["micro.nonperiodic_gap"].details["m_equals_l_defect"] > 0.01

    def test_determinism(self):
        report = run_determinism_check(jobs=2)
        assert report.passed
        assert report.measured == 0.0

    def test_single_phase_ladder_reaches_the_floor(self):
        reports = run_convergence_acceptance({"epsilons": [0.5, 0.25], "resolution": 8}, jobs=1,
                                             setups=["single_phase"])
        assert [r.check_id for r in reports] == ["converge.single_phase.floor"]
        assert reports[0].passed

    def test_exhausted_budget_is_inconclusive(self):
        reports = run_convergence_acceptance({"epsilons": [0.5, 0.25], "resolution": 8, "max_resolution": 8},
                                             jobs=1, setups=["laminate_identity"])
        assert {r.status for r in reports} == {"inconclusive"}
        assert all(math.isnan(r.measured) for r in reports)

    @pytest.mark.slow
    def test_full_verification_run(self):
        reports = run_verification(seed=0, jobs=2)
        ids = [r.check_id for r in reports]
        assert ids == sorted(ids)
        assert "determinism.laminate_oracle" in ids
        assert not any(r.check_id.startswith("converge.") for r in reports)


class TestReporting:
    """Tests for report tables, JUnit output and traceability."""

    @pytest.fixture
    def reports(self):
        return [
            CheckReport.compare("law.example", 1e-12, 1e-10, "TRIVIAL: example"),
            CheckReport.compare("cell.example", 0.2, 0.1, "DERIVED: example"),
            CheckReport("converge.example", "inconclusive", math.nan, 0.5, "DERIVED: example"),
        ]

    def test_non_finite_measurement_fails(self):
        assert CheckReport.compare("x.nan", math.nan, 1.0, "TRIVIAL").status == "fail"

    def test_reports_frame_is_sorted_and_has_no_runtimes(self, reports):
        frame = reports_frame(reports)
        assert frame["check_id"].tolist() == ["cell.example", "converge.example", "law.example"]
        assert "runtime_seconds" not in frame.columns

    def test_export_csv(self, reports, tmp_path):
        frame = pd.read_csv(export_csv(reports, tmp_path / "checks.csv"))
        assert frame["status"].tolist() == ["fail", "inconclusive", "pass"]

    def test_junit(self, reports, tmp_path):
        root = ElementTree.parse(export_junit(reports, tmp_path / "checks.xml")).getroot()
        assert root.tag == "testsuite"
        assert (root.get("tests"), root.get("failures"), root.get("skipped")) == ("3", "1", "1")
        cases = {(c.get("classname"), c.get("name")): c for c in root.iter("testcase")}
        assert cases[("cell", "example")].find("failure") is not None
        assert cases[("converge", "example")].find("skipped") is not None
        assert len(list(cases[("law", "example")])) == 0

    def test_traceability_table(self):
        table = traceability_table([CheckReport.compare("cell.linearity", 0.0, 1.0, "TRIVIAL")])
        expected_rows = sum(len(ids) for _, ids in ACCEPTANCE_CRITERIA.values())
        assert len(table) == expected_rows
        assert sorted(table["criterion"].unique().tolist()) == list(range(1, 11))
        statuses = dict(zip(table["check_id"], table["status"]))
        assert statuses["cell.linearity"] == "pass"
        assert statuses["laminate.tensor"] == "not_run"
        assert np.all(table["status"].isin(["pass", "not_run"]))
