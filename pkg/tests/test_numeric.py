"""
Tests for Numeric Core - Linear algebra helpers, seeds and finite differences.
"""

import numpy as np
import pytest

from core.errors import DimensionError, NumericError
from core.numeric import (
    as_matrix,
    axpy,
    column,
    column_norms,
    derive_seed,
    ensure_finite,
    finite_difference_gradient,
    make_rng,
    matvec_transposed,
)


class TestMatvecTransposed:
    """Test cases for M^T v."""

    def test_example_matrix(self):
        """Test the 2x2 example [[1,2],[3,4]]^T (1,1) = (4,6)."""
        M = as_matrix([1, 2, 3, 4], 2, 2)
        assert matvec_transposed(M, np.array([1.0, 1.0])).tolist() == [4.0, 6.0]

    def test_zero_vector(self):
        """Test that a zero vector gives a zero result."""
        M = make_rng(0).standard_normal((3, 5))
        assert np.all(matvec_transposed(M, np.zeros(3)) == 0.0)

    def test_matches_naive_loop(self):
        """Test agreement with an explicit double loop."""
        rng = make_rng(1)
        M = rng.standard_normal((6, 4))
        v = rng.standard_normal(6)
        naive = [sum(M[i, j] * v[i] for i in range(6)) for j in range(4)]
        assert np.allclose(matvec_transposed(M, v), naive, atol=1e-12)

    def test_dimension_mismatch(self):
        """Test that v.len != rows raises DimensionError."""
        with pytest.raises(DimensionError):
            matvec_transposed(np.zeros((3, 2)), np.zeros(2))


class TestHelpers:
    """Test cases for small vector helpers."""

    def test_as_matrix_wrong_count(self):
        """Test that a wrong element count raises DimensionError."""
        with pytest.raises(DimensionError):
            as_matrix([1, 2, 3], 2, 2)

    def test_column_copies(self):
        """Test that column returns a copy."""
        M = as_matrix([1, 2, 3, 4], 2, 2)
        col = column(M, 1)
        col[0] = 99.0
        assert M[0, 1] == 2.0

    def test_column_out_of_range(self):
        """Test that an invalid column index raises IndexError."""
        with pytest.raises(IndexError):
            column(np.zeros((2, 2)), 2)

    def test_axpy(self):
        """Test y + alpha * x."""
        assert axpy(-2.0, np.array([1.0, 2.0]), np.array([3.0, 3.0])).tolist() == [1.0, -1.0]

    def test_axpy_mismatch(self):
        """Test that mismatched lengths raise DimensionError."""
        with pytest.raises(DimensionError):
            axpy(1.0, np.zeros(2), np.zeros(3))

    def test_column_norms(self):
        """Test column norms of a 3-4-5 matrix."""
        assert column_norms(np.array([[3.0, 0.0], [4.0, 2.0]])).tolist() == [5.0, 2.0]

    def test_ensure_finite_names_index(self):
        """Test that the first non-finite entry is reported."""
        with pytest.raises(NumericError, match=r"\(1, 0\)"):
            ensure_finite(np.array([[0.0, 1.0], [np.nan, 2.0]]), "grad")


class TestSeeds:
    """Test cases for deterministic random streams."""

    def test_same_seed_same_stream(self):
        """Test that equal seeds reproduce draws exactly."""
        assert np.array_equal(make_rng(42).standard_normal(10), make_rng(42).standard_normal(10))

    def test_derived_seeds_differ_by_label(self):
        """Test that labels separate streams and are stable."""
        assert derive_seed(0, "init") != derive_seed(0, "shuffle", 1)
        assert derive_seed(0, "shuffle", 1) != derive_seed(0, "shuffle", 2)
        assert derive_seed(3, "init") == derive_seed(3, "init")


class TestFiniteDifferences:
    """Test cases for the central-difference oracle."""

    def test_quadratic(self):
        """Test f(x) = x^2 at 3 gives approximately 6."""
        grad = finite_difference_gradient(lambda v: float(v[0] ** 2), np.array([3.0]))
        assert grad[0] == pytest.approx(6.0, abs=1e-6)

    def test_constant(self):
        """Test that a constant function has zero gradient."""
        grad = finite_difference_gradient(lambda v: 5.0, np.array([1.0, 2.0, 3.0]))
        assert np.all(np.abs(grad) < 1e-9)

    def test_invalid_step(self):
        """Test that h ≤ 0 is rejected."""
        with pytest.raises(ValueError):
            finite_difference_gradient(lambda v: 0.0, np.zeros(1), h=0.0)

    def test_non_finite_reports_coordinate(self):
        """Test that a non-finite probe names the coordinate."""
        def f(v):
            return float("nan") if v[1] > 0.5 else 0.0

        with pytest.raises(NumericError, match="coordinate 1"):
            finite_difference_gradient(f, np.array([0.0, 0.5]), h=0.1)
