"""
Unit tests for the second- and fourth-order tensor value types.
"""

import numpy as np
import pytest

from locper_homog.exceptions import DimensionMismatchError, SingularTransformError, SymmetryError
from locper_homog.models.tensor import (
    Tensor2,
    Tensor4,
    array_to_voigt_matrix,
    voigt_labels,
    voigt_matrix_to_array,
    voigt_size,
)
from locper_homog.services.tensor_core import make_isotropic


class TestTensor2:
    """Tests for Tensor2."""

    def test_entries_are_read_only(self):
        t = Tensor2([[1.0, 2.0], [3.0, 4.0]])
        with pytest.raises(ValueError):
            t.entries[0, 0] = 5.0

    def test_rejects_bad_shapes(self):
        with pytest.raises(DimensionMismatchError):
            Tensor2(np.zeros((2, 3)))
        with pytest.raises(DimensionMismatchError):
            Tensor2(np.zeros((4, 4)))

    def test_rejects_non_finite_entries(self):
        with pytest.raises(ValueError):
            Tensor2([[np.nan, 0.0], [0.0, 1.0]])

    def test_sym_and_skew_split(self):
        t = Tensor2([[1.0, 2.0], [0.0, 3.0]])
        assert (t.sym() + t.skew()).allclose(t)
        assert t.sym().is_symmetric()
        assert np.allclose(t.skew().entries, -t.skew().entries.T)

    def test_inverse_of_singular_matrix_raises(self):
        with pytest.raises(SingularTransformError):
            Tensor2([[1.0, 2.0], [2.0, 4.0]]).inv()

    def test_composition_dimension_check(self):
        with pytest.raises(DimensionMismatchError):
            Tensor2.identity(2) @ Tensor2.identity(3)

    def test_orthogonality(self):
        c, s = np.cos(0.3), np.sin(0.3)
        assert Tensor2([[c, -s], [s, c]]).is_orthogonal()
        assert not Tensor2([[2.0, 0.0], [0.0, 1.0]]).is_orthogonal()

    def test_voigt_uses_symmetric_part(self):
        t = Tensor2([[1.0, 4.0], [2.0, 5.0]])
        assert np.allclose(t.to_voigt(), [1.0, 5.0, 3.0])
        assert np.allclose(t.to_voigt(mandel=True), [1.0, 5.0, 3.0 * np.sqrt(2.0)])

    def test_from_voigt_3d_order(self):
        t = Tensor2.from_voigt([1, 2, 3, 4, 5, 6], 3)
        assert t.entries[1, 2] == 4 and t.entries[0, 2] == 5 and t.entries[0, 1] == 6

    def test_from_dict_checks_declared_dimension(self):
        with pytest.raises(DimensionMismatchError):
            Tensor2.from_dict({"n": 3, "entries": np.eye(2).tolist()})


class TestTensor4:
    """Tests for Tensor4."""

    def test_isotropic_has_both_symmetries(self):
        C = make_isotropic(2.0, 3.0, 3)
        assert C.has_minor_symmetry
        assert C.has_major_symmetry

    def test_symmetry_flags_detect_violations(self):
        entries = make_isotropic(1.0, 1.0, 2).entries.copy()
        entries[0, 0, 1, 1] += 0.5
        entries[1, 1, 0, 0] -= 0.5
        C = Tensor4(entries)
        assert C.has_minor_symmetry
        assert not C.has_major_symmetry

    def test_apply_matches_einsum(self):
        C = make_isotropic(1.0, 2.0, 2)
        E = Tensor2([[0.1, 0.2], [0.2, -0.3]])
        expected = 1.0 * np.trace(E.entries) * np.eye(2) + 4.0 * E.entries
        assert np.allclose(C(E).entries, expected)

    def test_apply_dimension_check(self):
        with pytest.raises(DimensionMismatchError):
            make_isotropic(1.0, 1.0, 2).apply(Tensor2.identity(3))

    def test_voigt_matrix_of_isotropic_2d(self):
        voigt = make_isotropic(1.0, 2.0, 2).to_voigt()
        assert np.allclose(voigt, [[5.0, 1.0, 0.0], [1.0, 5.0, 0.0], [0.0, 0.0, 2.0]])

    def test_voigt_requires_minor_symmetry(self):
        entries = np.zeros((2, 2, 2, 2))
        entries[0, 1, 0, 0] = 1.0
        with pytest.raises(SymmetryError):
            Tensor4(entries).to_voigt()

    def test_voigt_and_mandel_agree(self):
        C = make_isotropic(3.0, 1.5, 3)
        assert Tensor4.from_voigt(C.to_voigt(mandel=True), 3, mandel=True).allclose(C)
        assert Tensor4.from_voigt(C.to_voigt(), 3).allclose(C)

    def test_batched_voigt_helpers(self):
        stack = np.stack([make_isotropic(1.0, 1.0, 2).entries, make_isotropic(2.0, 3.0, 2).entries])
        assert np.allclose(voigt_matrix_to_array(array_to_voigt_matrix(stack, 2), 2), stack)

    def test_from_voigt_checks_size(self):
        with pytest.raises(DimensionMismatchError):
            Tensor4.from_voigt(np.eye(3), 3)

    def test_from_dict_accepts_voigt(self):
        C = make_isotropic(1.0, 1.0, 2)
        assert Tensor4.from_dict({"n": 2, "voigt": C.to_voigt().tolist()}).allclose(C)
        assert Tensor4.from_dict(C.to_dict()).allclose(C)


def test_voigt_sizes_and_labels():
    assert voigt_size(2) == 3
    assert voigt_size(3) == 6
    assert voigt_labels("C", 3) == ["C11", "C22", "C33", "C23", "C13", "C12"]
