"""
Unit tests for the dense linear algebra helpers.
"""

from unittest.mock import patch

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from domain.exceptions import (
    ContractViolationError,
    NumericError,
    ResourceLimitError,
)
from domain.services.linalg import (
    jacobi_eigendecompose,
    kron_matvec,
    kronecker_product,
    sym_eigendecompose,
    unvec,
    vec,
)


def _well_conditioned_spd(rng: np.random.Generator, n: int) -> np.ndarray:
    m = rng.standard_normal((n, n))
    spd = m @ m.T / n + 0.5 * np.eye(n)
    return 0.5 * (spd + spd.T)


class TestSymEigendecompose:
    """Tests for the symmetric eigensolver."""

    def test_eigenvalues_sorted_descending(self):
        """Test eigenvalues of a diagonal matrix come back in descending order."""
        result = sym_eigendecompose(np.diag([1.0, 3.0, 2.0]))

        np.testing.assert_allclose(result.eigenvalues, [3.0, 2.0, 1.0])
        np.testing.assert_allclose(np.abs(result.basis[:, 0]), [0.0, 1.0, 0.0])

    def test_reconstructs_matrix(self, spd_factory):
        """Test U diag(s) U^T gives back the input."""
        m = spd_factory(7)
        result = sym_eigendecompose(m)

        np.testing.assert_allclose(result.reconstruct(), m, atol=1e-12)
        np.testing.assert_allclose(result.basis.T @ result.basis, np.eye(7), atol=1e-12)

    def test_psd_clamp(self):
        """Test tiny negative eigenvalues are clamped to zero on request."""
        m = np.diag([1.0, -1e-12])

        assert sym_eigendecompose(m).eigenvalues[-1] < 0.0
        np.testing.assert_array_equal(
            sym_eigendecompose(m, psd=True).eigenvalues, [1.0, 0.0]
        )

    def test_asymmetric_matrix_rejected(self):
        """Test a non-symmetric matrix raises ContractViolationError."""
        with pytest.raises(ContractViolationError, match="not symmetric"):
            sym_eigendecompose(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_non_square_matrix_rejected(self):
        with pytest.raises(ContractViolationError, match="square"):
            sym_eigendecompose(np.ones((2, 3)))

    def test_non_finite_matrix_rejected(self):
        with pytest.raises(ContractViolationError, match="finite"):
            sym_eigendecompose(np.array([[np.nan, 0.0], [0.0, 1.0]]))

    def test_falls_back_to_jacobi(self, spd_factory):
        """Test a LAPACK failure is answered by the Jacobi solver."""
        m = spd_factory(5)
        expected = np.sort(np.linalg.eigvalsh(m))[::-1]

        with patch.object(
            scipy.linalg, "eigh", side_effect=np.linalg.LinAlgError("no convergence")
        ) as eigh:
            result = sym_eigendecompose(m)

        eigh.assert_called_once()
        np.testing.assert_allclose(result.eigenvalues, expected, rtol=1e-10)


class TestJacobi:
    """Tests for the Jacobi fallback solver."""

    def test_agrees_with_lapack(self, spd_factory):
        """Test Jacobi and LAPACK agree on eigenvalues and reconstruction."""
        m = spd_factory(6)
        jacobi = jacobi_eigendecompose(m)
        lapack = sym_eigendecompose(m)

        np.testing.assert_allclose(jacobi.eigenvalues, lapack.eigenvalues, rtol=1e-10)
        np.testing.assert_allclose(jacobi.reconstruct(), m, atol=1e-10)

    def test_diagonal_input_needs_no_sweep(self):
        result = jacobi_eigendecompose(np.diag([2.0, 5.0]), max_sweeps=0)

        np.testing.assert_array_equal(result.eigenvalues, [5.0, 2.0])

    def test_sweep_budget_exhausted(self, spd_factory):
        """Test running out of sweeps raises NumericError with the sweep count."""
        with pytest.raises(NumericError) as excinfo:
            jacobi_eigendecompose(spd_factory(4), max_sweeps=0)

        assert excinfo.value.iterations == 0

    def test_repeated_eigenvalues(self):
        m = np.array([[2.0, 1.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, 3.0]])

        result = jacobi_eigendecompose(m)

        np.testing.assert_allclose(result.eigenvalues, [3.0, 3.0, 1.0], atol=1e-12)


class TestKronecker:
    """Tests for Kronecker products and the vec convention."""

    def test_small_product(self):
        """Test a hand-computed 2x2 by 2x2 product."""
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        b = np.array([[0.0, 1.0], [1.0, 0.0]])

        expected = np.array(
            [
                [0.0, 1.0, 0.0, 2.0],
                [1.0, 0.0, 2.0, 0.0],
                [0.0, 3.0, 0.0, 4.0],
                [3.0, 0.0, 4.0, 0.0],
            ]
        )
        np.testing.assert_array_equal(kronecker_product(a, b), expected)

    def test_size_limit(self):
        """Test materialising beyond the limit raises ResourceLimitError."""
        with pytest.raises(ResourceLimitError) as excinfo:
            kronecker_product(np.eye(5), np.eye(4), max_dim=16)

        assert excinfo.value.requested == 20
        assert excinfo.value.limit == 16

    def test_vec_is_row_major(self):
        np.testing.assert_array_equal(vec([[1.0, 2.0], [3.0, 4.0]]), [1, 2, 3, 4])
        np.testing.assert_array_equal(
            unvec([1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 2, 3), [[1, 2, 3], [4, 5, 6]]
        )

    def test_vec_convention_pin(self, rng):
        """Test kron(A, B) vec(C) equals vec(A C B^T)."""
        a = rng.standard_normal((3, 4))
        b = rng.standard_normal((2, 5))
        c = rng.standard_normal((4, 5))

        np.testing.assert_allclose(
            kronecker_product(a, b) @ vec(c), vec(a @ c @ b.T), atol=1e-12
        )

    def test_unvec_rejects_wrong_length(self):
        with pytest.raises(ContractViolationError, match="Cannot reshape"):
            unvec(np.ones(5), 2, 3)

    def test_kron_matvec_rejects_wrong_length(self):
        with pytest.raises(ContractViolationError, match="does not match"):
            kron_matvec(np.eye(2), np.eye(3), np.ones(5))

    @given(
        p=st.integers(min_value=1, max_value=8),
        q=st.integers(min_value=1, max_value=8),
        seed=st.integers(min_value=0, max_value=2**32 - 1),
    )
    @settings(max_examples=40, deadline=None)
    def test_kron_matvec_matches_materialised(self, p, q, seed):
        """Test the implicit matvec agrees with the dense product."""
        generator = np.random.default_rng(seed)
        a = generator.standard_normal((p, p))
        b = generator.standard_normal((q, q))
        v = generator.standard_normal(p * q)

        dense = kronecker_product(a, b) @ v
        scale = max(1.0, float(np.max(np.abs(dense))))
        assert np.max(np.abs(kron_matvec(a, b, v) - dense)) <= 1e-10 * scale

    @given(
        p=st.integers(min_value=1, max_value=8),
        q=st.integers(min_value=1, max_value=8),
        seed=st.integers(min_value=0, max_value=2**32 - 1),
    )
    @settings(max_examples=40, deadline=None)
    def test_inverse_of_product(self, p, q, seed):
        """Test (A kron B)^-1 equals A^-1 kron B^-1."""
        generator = np.random.default_rng(seed)
        a = _well_conditioned_spd(generator, p)
        b = _well_conditioned_spd(generator, q)

        lhs = np.linalg.inv(kronecker_product(a, b))
        rhs = kronecker_product(np.linalg.inv(a), np.linalg.inv(b))
        assert np.linalg.norm(lhs - rhs) <= 1e-8 * np.linalg.norm(rhs)

    @given(
        p=st.integers(min_value=1, max_value=8),
        q=st.integers(min_value=1, max_value=8),
        seed=st.integers(min_value=0, max_value=2**32 - 1),
    )
    @settings(max_examples=40, deadline=None)
    def test_eigenvalues_of_product(self, p, q, seed):
        """Test the spectrum of A kron B is the set of pairwise products."""
        generator = np.random.default_rng(seed)
        a = _well_conditioned_spd(generator, p)
        b = _well_conditioned_spd(generator, q)

        products = np.outer(
            sym_eigendecompose(a).eigenvalues, sym_eigendecompose(b).eigenvalues
        ).ravel()
        expected = np.sort(products)[::-1]
        kron = kronecker_product(a, b)
        actual = sym_eigendecompose(0.5 * (kron + kron.T)).eigenvalues
        assert np.linalg.norm(actual - expected) <= 1e-8 * np.linalg.norm(expected)
