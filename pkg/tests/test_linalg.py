import unittest

import numpy as np
import scipy.sparse

from dgieti.exceptions import DimensionError, NotPositiveDefiniteError, OracleSizeError
from dgieti.linalg import (
    DenseSpdFactorization, SpdFactorization, dense_sym_eig, is_symmetric, restrict, solve, spd_factorize,
)


def poisson_1d(n):
    return scipy.sparse.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format="csr")


class TestSpdFactorization(unittest.TestCase):
    def test_identity(self):
        b = np.arange(5.0)
        np.testing.assert_allclose(solve(spd_factorize(scipy.sparse.identity(5)), b), b)

    def test_small_system(self):
        fact = SpdFactorization(np.array([[2.0, 1.0], [1.0, 2.0]]))
        np.testing.assert_allclose(fact(np.array([3.0, 3.0])), [1.0, 1.0])

    def test_poisson_residual(self):
        A = poisson_1d(100)
        b = np.random.default_rng(0).standard_normal(100)
        x = spd_factorize(A).solve(b)
        self.assertLess(np.linalg.norm(A @ x - b) / np.linalg.norm(b), 1e-12)

    def test_random_spd(self):
        rng = np.random.default_rng(1)
        M = rng.standard_normal((30, 30))
        A = M.T @ M + np.eye(30)
        b = rng.standard_normal(30)
        x = SpdFactorization(A).solve(b)
        self.assertLess(np.linalg.norm(A @ x - b) / np.linalg.norm(b), 1e-10)

    def test_indefinite_raises(self):
        with self.assertRaises(NotPositiveDefiniteError):
            SpdFactorization(np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_negative_definite_raises(self):
        with self.assertRaises(NotPositiveDefiniteError):
            SpdFactorization(-poisson_1d(4))

    def test_non_square_raises(self):
        with self.assertRaises(DimensionError):
            SpdFactorization(np.ones((2, 3)))

    def test_wrong_rhs_size(self):
        with self.assertRaises(DimensionError):
            SpdFactorization(np.eye(3)).solve(np.ones(4))

    def test_empty_matrix(self):
        fact = SpdFactorization(scipy.sparse.csr_matrix((0, 0)))
        self.assertEqual(fact.solve(np.zeros(0)).shape, (0,))

    def test_dense_cholesky(self):
        x = DenseSpdFactorization(np.array([[4.0, 0.0], [0.0, 2.0]])).solve(np.array([4.0, 4.0]))
        np.testing.assert_allclose(x, [1.0, 2.0])
        with self.assertRaises(NotPositiveDefiniteError):
            DenseSpdFactorization(np.array([[0.0, 1.0], [1.0, 0.0]]))


class TestDenseEig(unittest.TestCase):
    def test_diagonal(self):
        np.testing.assert_allclose(dense_sym_eig(np.diag([3.0, 1.0, 2.0])), [1.0, 2.0, 3.0])

    def test_swap(self):
        np.testing.assert_allclose(dense_sym_eig(np.array([[0.0, 1.0], [1.0, 0.0]])), [-1.0, 1.0], atol=1e-14)

    def test_trace_and_vectors(self):
        rng = np.random.default_rng(2)
        M = rng.standard_normal((8, 8))
        A = M + M.T
        w, V = dense_sym_eig(A, vectors=True)
        self.assertAlmostEqual(w.sum(), np.trace(A), places=10)
        np.testing.assert_allclose(V @ np.diag(w) @ V.T, A, atol=1e-10)

    def test_generalized(self):
        w = dense_sym_eig(np.diag([2.0, 6.0]), B=np.diag([2.0, 3.0]))
        np.testing.assert_allclose(w, [1.0, 2.0])

    def test_size_guard(self):
        with self.assertRaises(OracleSizeError):
            dense_sym_eig(np.eye(3), limit=2)
        self.assertEqual(dense_sym_eig(np.eye(3), limit=None).size, 3)


class TestHelpers(unittest.TestCase):
    def test_is_symmetric(self):
        self.assertTrue(is_symmetric(poisson_1d(5)))
        self.assertFalse(is_symmetric(np.array([[1.0, 2.0], [0.0, 1.0]])))

    def test_restrict(self):
        A = poisson_1d(5)
        sub = restrict(A, [0, 2], [1, 2])
        np.testing.assert_allclose(sub.toarray(), [[-1.0, 0.0], [-1.0, 2.0]])


if __name__ == "__main__":
    unittest.main()
