"""
Unit tests for the reference element, boxes, cell meshes and macro meshes.
"""

import numpy as np
import pytest

from locper_homog.exceptions import ConfigError, DimensionMismatchError, DomainError
from locper_homog.models.cell import CellMesh
from locper_homog.models.grid import Box, q1_reference
from locper_homog.models.macro import DisplacementField, MacroMesh, make_vector_field


class TestQ1Reference:
    """Tests for the Q1 reference element."""

    @pytest.mark.parametrize("n", [2, 3])
    def test_partition_of_unity(self, n):
        ref = q1_reference(n)
        assert np.allclose(ref.shape_values.sum(axis=1), 1.0)
        assert np.allclose(ref.shape_gradients.sum(axis=1), 0.0)
        assert np.isclose(ref.gauss_weights.sum(), 1.0)

    def test_node_count(self):
        assert q1_reference(2).nodes_per_element == 4
        assert q1_reference(3).nodes_per_element == 8

    def test_reproduces_linear_functions(self):
        ref = q1_reference(2)
        xi = np.array([[0.2, 0.7], [0.9, 0.1]])
        nodal = ref.offsets @ np.array([2.0, -1.0]) + 0.5
        assert np.allclose(ref.values_at(xi) @ nodal, xi @ np.array([2.0, -1.0]) + 0.5)
        assert np.allclose(np.einsum("pa,a->p", ref.gradients_at(xi)[:, :, 0], nodal), 2.0)


class TestBox:
    """Tests for Box."""

    def test_rejects_inverted_corners(self):
        with pytest.raises(ValueError):
            Box(np.array([0.0, 1.0]), np.array([1.0, 0.5]))

    def test_extent_volume_and_round_trip(self):
        box = Box.from_dict({"lower": [0.1, 0.1], "upper": [1.1, 0.6]})
        assert np.allclose(box.extent, [1.0, 0.5])
        assert np.isclose(box.volume, 0.5)
        restored = Box.from_dict(box.to_dict())
        assert np.allclose(restored.lower, box.lower) and np.allclose(restored.upper, box.upper)

    def test_contains(self):
        box = Box.unit(2)
        assert box.contains(np.array([[0.0, 1.0], [0.5, 0.5]])).all()
        assert not box.contains(np.array([[1.1, 0.5]])).any()


class TestCellMesh:
    """Tests for the periodic cell mesh."""

    def test_counts(self):
        mesh = CellMesh(2, 4)
        assert mesh.num_nodes == 16
        assert mesh.num_elements == 16
        assert mesh.num_dofs == 32
        assert np.isclose(mesh.element_volumes.sum(), 1.0)

    def test_periodic_connectivity_wraps(self):
        mesh = CellMesh(2, 4)
        # The last element in each row shares nodes with the first column
        last = mesh.element_nodes[3]
        assert set(last) & set(mesh.element_nodes[0])

    def test_periodic_map_identifies_faces(self):
        mesh = CellMesh(2, 3)
        assert mesh.periodic_map[mesh.full_node_id(0)] == 0
        # Node (3, 0) of the 4 x 4 grid folds back onto node (0, 0)
        assert mesh.periodic_map[3 * 4] == 0

    def test_rejects_bad_dimension_and_resolution(self):
        with pytest.raises(DimensionMismatchError):
            CellMesh(1, 4)
        for m in (1, 0, 2.5, True):
            with pytest.raises(ConfigError, match="at least 2"):
                CellMesh(2, m)


class TestMacroMesh:
    """Tests for the macro mesh and displacement fields."""

    @pytest.fixture
    def mesh(self):
        return MacroMesh(Box(np.array([0.0, 0.0]), np.array([2.0, 1.0])), [4, 2])

    def test_counts_and_boundary(self, mesh):
        assert mesh.num_nodes == 15
        assert mesh.num_elements == 8
        assert int(mesh.boundary_nodes.sum()) == 12
        assert np.allclose(mesh.h, [0.5, 0.5])

    def test_scalar_resolution_applies_to_every_axis(self):
        mesh = MacroMesh(Box.unit(3), 2)
        assert mesh.counts.tolist() == [2, 2, 2]

    def test_rejects_too_coarse_meshes(self):
        with pytest.raises(ConfigError):
            MacroMesh(Box.unit(2), [1, 4])

    def test_quadrature_integrates_area(self, mesh):
        assert np.isclose(mesh.quadrature_weights().sum(), 2.0)

    def test_locate_outside_raises(self, mesh):
        with pytest.raises(DomainError):
            mesh.locate(np.array([[2.5, 0.5]]))

    def test_linear_field_is_interpolated_exactly(self, mesh):
        A = np.array([[1.0, 2.0], [-0.5, 0.25]])
        u = DisplacementField(mesh, mesh.node_coordinates @ A.T)
        points = np.array([[0.3, 0.7], [1.9, 0.05]])
        assert np.allclose(u(points), points @ A.T)
        assert np.allclose(u.gradient(points), A)


class TestVectorFields:
    """Tests for boundary data and body force descriptors."""

    def test_zero_and_constant(self):
        pts = np.zeros((3, 2))
        assert np.allclose(make_vector_field(None, 2)(pts), 0.0)
        assert np.allclose(make_vector_field({"type": "constant", "value": [1.0, 2.0]}, 2)(pts), [1.0, 2.0])

    def test_sine_vanishes_on_unit_box_boundary(self):
        field = make_vector_field({"type": "sine", "amplitude": [0.0, -1.0]}, 2)
        boundary = np.array([[0.0, 0.3], [1.0, 0.7], [0.4, 0.0], [0.6, 1.0]])
        assert np.allclose(field(boundary), 0.0)
        assert np.allclose(field(np.array([[0.5, 0.5]])), [0.0, -1.0])

    def test_unknown_type(self):
        with pytest.raises(ConfigError):
            make_vector_field({"type": "vortex"}, 2)
