"""
Contract tests for cell discretization and phase assignment.
"""

import json

import numpy as np
import pytest
import yaml

from locper_homog.exceptions import ConfigError, GeometryError, SymmetryError
from locper_homog.models.cell import Phase
from locper_homog.models.tensor import Tensor4
from locper_homog.services.cell_domain import (
    assign_phases,
    build_cell_material,
    build_cell_mesh,
    export_voxels,
    load_voxel_phases,
    periodic_map,
    sample_phase,
)
from locper_homog.services.tensor_core import make_isotropic


class TestPhases:
    """Tests for phase validation."""

    def test_default_generator_is_st_venant(self, stiff_phase):
        assert stiff_phase.residual_is_stress_free
        assert not stiff_phase.residual_is_position_dependent

    def test_rejects_asymmetric_stiffness(self):
        entries = make_isotropic(1.0, 1.0, 2).entries.copy()
        entries[0, 0, 1, 1] += 0.3
        with pytest.raises(SymmetryError):
            Phase("bad", Tensor4(entries))

    def test_symmetry_tolerance_comes_from_config(self, isolated_workdir):
        entries = make_isotropic(1.0, 1.0, 2).entries.copy()
        entries[0, 0, 1, 1] += 1e-6
        with pytest.raises(SymmetryError):
            Phase("nearly", Tensor4(entries))
        (isolated_workdir / "config.yaml").write_text(yaml.safe_dump({"cell": {"symmetry_tolerance": 1e-4}}))
        assert Phase("nearly", Tensor4(entries)).name == "nearly"


class TestAssignPhases:
    """Tests for assign_phases and the geometry types."""

    def test_laminate_fractions(self, laminate_material):
        assert np.allclose(laminate_material.volume_fractions, [0.5, 0.5])
        # Phase 0 sits below the interface
        low = laminate_material.mesh.element_centroids[:, 0] < 0.5
        assert np.all(laminate_material.phase_ids[low] == 0)

    def test_inclusion_fraction_close_to_disc_area(self, inclusion_material):
        assert inclusion_material.volume_fractions[1] == pytest.approx(np.pi * 0.09, abs=0.03)

    def test_checkerboard(self, stiff_phase, soft_phase):
        material = assign_phases(build_cell_mesh(2, 8), {"type": "checkerboard", "cells": 2},
                                 [stiff_phase, soft_phase])
        assert np.allclose(material.volume_fractions, [0.5, 0.5])

    def test_voxel_array(self, stiff_phase, soft_phase):
        voxels = np.zeros((4, 4), dtype=int)
        voxels[1, 2] = 1
        material = assign_phases(build_cell_mesh(2, 4), {"type": "voxel", "phases": voxels.tolist()},
                                 [stiff_phase, soft_phase])
        assert material.phase_ids.tolist().count(1) == 1

    def test_unknown_geometry(self, stiff_phase):
        with pytest.raises(GeometryError):
            assign_phases(build_cell_mesh(2, 4), {"type": "honeycomb"}, [stiff_phase])

    def test_empty_phase_is_rejected(self, stiff_phase, soft_phase):
        with pytest.raises(GeometryError, match="occupy no element"):
            assign_phases(build_cell_mesh(2, 8), {"type": "laminate", "fraction": 0.01}, [stiff_phase, soft_phase])

    def test_missing_phase(self, stiff_phase):
        with pytest.raises(GeometryError, match="needs 2 phases"):
            assign_phases(build_cell_mesh(2, 8), {"type": "laminate"}, [stiff_phase])

    def test_inclusion_must_fit_in_cell(self, stiff_phase, soft_phase):
        with pytest.raises(GeometryError):
            assign_phases(build_cell_mesh(2, 8), {"type": "inclusion", "radius": 0.6}, [stiff_phase, soft_phase])

    def test_laminate_fraction_range(self, stiff_phase, soft_phase):
        with pytest.raises(GeometryError):
            assign_phases(build_cell_mesh(2, 8), {"type": "laminate", "fraction": 1.5}, [stiff_phase, soft_phase])


class TestCellHelpers:
    """Tests for periodic maps, sampling and voxel files."""

    def test_periodic_map_folds_upper_faces(self):
        mesh = build_cell_mesh(2, 4)
        assert periodic_map(mesh, 4 * 5 + 4) == 0
        assert np.array_equal(periodic_map(mesh, np.array([0, 5])), [0, 4])

    def test_sample_phase_is_periodic(self, laminate_material):
        points = np.array([[0.2, 0.3], [1.2, -0.7], [0.8, 0.3]])
        assert sample_phase(laminate_material, points).tolist() == [0, 0, 1]

    def test_voxel_files_round_trip(self, inclusion_material, tmp_path):
        header, data = export_voxels(inclusion_material, tmp_path / "phases.json")
        assert data.exists()
        voxels = load_voxel_phases(header)
        assert np.array_equal(voxels.reshape(-1), inclusion_material.phase_ids)

        again = assign_phases(inclusion_material.mesh, {"type": "voxel", "path": str(header)},
                              list(inclusion_material.phases))
        assert np.array_equal(again.phase_ids, inclusion_material.phase_ids)

    def test_truncated_voxel_file(self, inclusion_material, tmp_path):
        header, data = export_voxels(inclusion_material, tmp_path / "phases.json")
        data.write_bytes(data.read_bytes()[:-4])
        with pytest.raises(GeometryError):
            load_voxel_phases(header)

    def test_voxel_file_phase_count_must_match_material(self, inclusion_material, stiff_phase, tmp_path):
        header, _ = export_voxels(inclusion_material, tmp_path / "phases.json")
        phases = list(inclusion_material.phases) + [Phase("extra", stiff_phase.stiffness)]
        with pytest.raises(ConfigError, match="declares 2 phases"):
            assign_phases(inclusion_material.mesh, {"type": "voxel", "path": str(header)}, phases)

        document = json.loads(header.read_text())
        document["phases"] = 3
        header.write_text(json.dumps(document))
        with pytest.raises(ConfigError, match="declares 3 phases"):
            assign_phases(inclusion_material.mesh, {"type": "voxel", "path": str(header)},
                          list(inclusion_material.phases))

    def test_negative_voxel_ids(self, stiff_phase):
        voxels = np.zeros((4, 4), dtype=int)
        voxels[0, 0] = -1
        with pytest.raises(GeometryError, match="non-negative"):
            assign_phases(build_cell_mesh(2, 4), {"type": "voxel", "phases": voxels.tolist()}, [stiff_phase])

    def test_build_from_config_entries(self):
        material = build_cell_material(2, 8, {"type": "laminate", "fraction": 0.25, "axis": 1}, [
            {"name": "fiber", "type": "orthotropic", "constants": {"c11": 20.0, "c22": 5.0, "c12": 2.0, "c66": 3.0},
             "orientation_angle": 30.0},
            {"name": "matrix", "type": "isotropic", "lambda": 1.0, "mu": 1.0},
        ])
        assert [p.name for p in material.phases] == ["fiber", "matrix"]
        assert np.allclose(material.volume_fractions, [0.25, 0.75])
