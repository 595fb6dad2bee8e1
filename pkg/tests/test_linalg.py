"""Cyclic Jacobi eigensolver against the dense library oracle."""

import numpy as np
import pytest

from foca.linalg import jacobi_eigh


class TestJacobiEigh:
    def test_diagonal_matrix(self):
        vals, vecs = jacobi_eigh(np.diag([3.0, -1.0, 2.0]))
        np.testing.assert_allclose(vals, [-1.0, 2.0, 3.0])
        np.testing.assert_allclose(np.abs(vecs), np.eye(3)[:, [1, 2, 0]], atol=1e-14)

    def test_matches_library_eigh_over_random_instances(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            n = int(rng.integers(1, 13))
            m = rng.normal(size=(n, n))
            a = (m + m.T) / 2.0
            vals, vecs = jacobi_eigh(a)
            ref = np.linalg.eigvalsh(a)
            np.testing.assert_allclose(vals, ref, rtol=1e-10, atol=1e-10)
            # eigenpair residual and orthonormality
            np.testing.assert_allclose(a @ vecs, vecs * vals, atol=1e-9)
            np.testing.assert_allclose(vecs.T @ vecs, np.eye(n), atol=1e-12)

    def test_psd_gram_matrix_nonnegative(self):
        rng = np.random.default_rng(3)
        g = rng.normal(size=(20, 6))
        vals, _ = jacobi_eigh(g.T @ g)
        assert vals.min() > -1e-10

    def test_moderate_dimension(self):
        rng = np.random.default_rng(7)
        m = rng.normal(size=(120, 120))
        a = (m + m.T) / 2.0
        vals, vecs = jacobi_eigh(a)
        np.testing.assert_allclose(vals, np.linalg.eigvalsh(a), rtol=1e-9, atol=1e-9)
        np.testing.assert_allclose(vecs.T @ vecs, np.eye(120), atol=1e-11)

    def test_zero_and_scalar_matrices(self):
        vals, vecs = jacobi_eigh(np.zeros((4, 4)))
        np.testing.assert_array_equal(vals, np.zeros(4))
        vals, vecs = jacobi_eigh(np.array([[5.0]]))
        assert vals[0] == 5.0 and vecs[0, 0] == 1.0

    def test_rejects_asymmetric_and_nonsquare(self):
        with pytest.raises(ValueError, match="symmetric"):
            jacobi_eigh(np.array([[0.0, 1.0], [0.0, 0.0]]))
        with pytest.raises(ValueError, match="square"):
            jacobi_eigh(np.zeros((2, 3)))
