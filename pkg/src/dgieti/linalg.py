"""Sparse and dense linear algebra kernels.

Sparse matrices are :class:`scipy.sparse.csr_matrix` objects in canonical
form. Symmetric positive definite systems are factorized once with a
symmetric-mode sparse LU, whose diagonal pivots are those of an
LDL^T factorization, so a non-positive pivot certifies that the matrix is
not positive definite.
"""

import logging
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .exceptions import DimensionError, NotPositiveDefiniteError, OracleSizeError

logger = logging.getLogger(__name__)

DENSE_SIZE_LIMIT = 2000


def as_csr(A) -> scipy.sparse.csr_matrix:
    """Return `A` as a canonical CSR matrix (sorted indices, no duplicates)."""
    A = scipy.sparse.csr_matrix(A)
    A.sum_duplicates()
    A.sort_indices()
    return A


def symmetry_defect(A) -> float:
    """Relative symmetry defect max|A - A^T| / max|A|."""
    if scipy.sparse.issparse(A):
        diff = abs(A - A.T).max() if A.nnz else 0.0
        scale = abs(A).max() if A.nnz else 0.0
    else:
        A = np.asarray(A)
        if A.size == 0:
            return 0.0
        diff = np.max(np.abs(A - A.T))
        scale = np.max(np.abs(A))
    return float(diff / scale) if scale > 0 else 0.0


def is_symmetric(A, tol: float = 1e-12) -> bool:
    return symmetry_defect(A) <= tol


class SpdFactorization:
    """Sparse direct factorization of a symmetric positive definite matrix.

    Args:
        A: square sparse (or dense) symmetric matrix.
        pivot_tol (float): pivots below ``pivot_tol * max|diag(A)|`` are
            treated as non-positive.

    Raises:
        DimensionError: If `A` is not square.
        NotPositiveDefiniteError: If a non-positive pivot is met.
    """

    def __init__(self, A, pivot_tol: float = 1e-14):
        A = scipy.sparse.csc_matrix(A)
        if A.shape[0] != A.shape[1]:
            raise DimensionError(f"Cannot factorize a non-square matrix of shape {A.shape}")
        self.shape = A.shape
        self.n = A.shape[0]
        self._lu = None
        if self.n == 0:
            return
        scale = np.max(np.abs(A.diagonal())) if self.n else 0.0
        if not scale > 0:
            raise NotPositiveDefiniteError("Matrix has a non-positive diagonal")
        try:
            self._lu = scipy.sparse.linalg.splu(
                A,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options=dict(SymmetricMode=True),
            )
        except RuntimeError as e:
            raise NotPositiveDefiniteError(f"Factorization failed: {str(e)}") from e
        pivots = self._lu.U.diagonal()
        if np.any(pivots <= pivot_tol * scale):
            raise NotPositiveDefiniteError(
                f"Non-positive pivot {pivots.min():.3e} in matrix of size {self.n}"
            )
        logger.debug("factorized SPD matrix n=%d nnz(L+U)=%d", self.n, self._lu.L.nnz + self._lu.U.nnz)

    def solve(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.n:
            raise DimensionError(f"Right-hand side has {b.shape[0]} rows, expected {self.n}")
        if self.n == 0:
            return np.zeros_like(b)
        return self._lu.solve(b)

    __call__ = solve


def spd_factorize(A) -> SpdFactorization:
    return SpdFactorization(A)


def solve(fact: SpdFactorization, b) -> np.ndarray:
    return fact.solve(b)


class DenseSpdFactorization:
    """Dense Cholesky factorization, used for the small coarse problem."""

    def __init__(self, A):
        A = np.asarray(A, dtype=float)
        self.n = A.shape[0]
        self._factor = None
        if self.n == 0:
            return
        try:
            self._factor = scipy.linalg.cho_factor(A)
        except np.linalg.LinAlgError as e:
            raise NotPositiveDefiniteError(f"Dense Cholesky failed: {str(e)}") from e

    def solve(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if self.n == 0:
            return np.zeros_like(b)
        return scipy.linalg.cho_solve(self._factor, b)


def dense_sym_eig(A, vectors: bool = False, B=None, limit: Optional[int] = DENSE_SIZE_LIMIT):
    """Eigenvalues (ascending) of a dense symmetric matrix.

    Args:
        A: dense or sparse symmetric matrix.
        vectors (bool): also return the orthonormal eigenvectors.
        B: optional symmetric positive definite matrix of a generalized problem.
        limit (int): size guard; ``None`` disables it.

    Returns:
        The eigenvalues, or a tuple ``(eigenvalues, eigenvectors)``.

    Raises:
        OracleSizeError: If the matrix exceeds the size guard.
    """
    if scipy.sparse.issparse(A):
        A = A.toarray()
    A = np.asarray(A, dtype=float)
    if limit is not None and A.shape[0] > limit:
        raise OracleSizeError(f"Dense eigenproblem of size {A.shape[0]} exceeds the limit {limit}")
    if B is not None and scipy.sparse.issparse(B):
        B = B.toarray()
    if A.shape[0] == 0:
        return (np.zeros(0), np.zeros((0, 0))) if vectors else np.zeros(0)
    if vectors:
        return scipy.linalg.eigh(A, B)
    return scipy.linalg.eigh(A, B, eigvals_only=True)


def restrict(A, rows, cols=None) -> scipy.sparse.csr_matrix:
    """Submatrix ``A[rows][:, cols]`` in CSR format."""
    if cols is None:
        cols = rows
    return as_csr(scipy.sparse.csr_matrix(A)[rows, :][:, cols])
