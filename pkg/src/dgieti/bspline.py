"""Univariate and tensor-product B-spline bases.

Only open (clamped) knot vectors on [0, 1] are supported. Indices are
0-based; tensor-product multi-indices ``(i1, i2)`` are flattened row-major
as ``i1 * M2 + i2``.
"""

import logging
from typing import Sequence, Tuple

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .exceptions import DimensionError, DomainError

logger = logging.getLogger(__name__)

_ROUNDOFF = 1e-14


class KnotVector:
    """An open B-spline knot vector on [0, 1] together with its degree.

    Args:
        knots (Sequence[float]): nondecreasing knots; the first and last knot
            must be repeated ``degree + 1`` times.
        degree (int): spline degree ``p >= 1``.

    Raises:
        DomainError: If the knots do not form an open knot vector on [0, 1]
            with interior multiplicities at most `degree`.
    """

    def __init__(self, knots: Sequence[float], degree: int):
        kv = np.array(knots, dtype=float)
        p = int(degree)
        if p < 1:
            raise DomainError(f"Spline degree must be at least 1, got {degree}")
        if kv.ndim != 1 or kv.size < 2 * (p + 1):
            raise DomainError(f"Knot vector of degree {p} needs at least {2 * (p + 1)} knots")
        if np.any(np.diff(kv) < 0):
            raise DomainError("Knots must be nondecreasing")
        if np.any(kv[:p + 1] != 0.0) or np.any(kv[-(p + 1):] != 1.0):
            raise DomainError(f"Knot vector must be open on [0, 1] with {p + 1} repeated end knots")
        _, counts = np.unique(kv[p + 1:-(p + 1)], return_counts=True)
        if counts.size and counts.max() > p:
            raise DomainError(f"Interior knot multiplicity {counts.max()} exceeds the degree {p}")
        kv.setflags(write=False)
        self._knots = kv
        self._degree = p

    def __repr__(self):
        return f"KnotVector({list(self._knots)!r}, {self._degree})"

    def __eq__(self, other):
        if not isinstance(other, KnotVector):
            return NotImplemented
        return self.degree == other.degree and np.array_equal(self.knots, other.knots)

    def __hash__(self):
        return hash((self._degree, self._knots.tobytes()))

    @property
    def knots(self) -> np.ndarray:
        return self._knots

    @property
    def degree(self) -> int:
        return self._degree

    @property
    def numdofs(self) -> int:
        """Number of basis functions ``M = len(knots) - p - 1``."""
        return self._knots.size - self._degree - 1

    @property
    def mesh(self) -> np.ndarray:
        """Breakpoints, i.e. the knots without repetitions."""
        return np.unique(self._knots)

    @property
    def numspans(self) -> int:
        return self.mesh.size - 1

    @property
    def meshsize(self) -> float:
        """Length of the largest knot span."""
        return float(np.max(np.diff(self.mesh)))

    def greville(self) -> np.ndarray:
        """Greville abscissae, the running averages of ``p`` interior knots."""
        p = self._degree
        g = np.convolve(self._knots, np.ones(p) / p)[p:-p]
        return np.clip(g, 0.0, 1.0)


def make_knots(degree: int, num_spans: int) -> KnotVector:
    """Uniform open knot vector with `num_spans` equal spans."""
    interior = np.linspace(0.0, 1.0, num_spans + 1)[1:-1]
    return KnotVector(np.concatenate([np.zeros(degree + 1), interior, np.ones(degree + 1)]), degree)


def _check_point(x: float) -> float:
    if not (-_ROUNDOFF <= x <= 1.0 + _ROUNDOFF):
        raise DomainError(f"Evaluation point {x} lies outside [0, 1]")
    return min(max(float(x), 0.0), 1.0)


def find_span(kv: KnotVector, x: float) -> int:
    """Index `s` with ``knots[s] <= x < knots[s+1]``.

    The right end point ``x = 1`` is mapped to the last nonempty span.

    Raises:
        DomainError: If `x` lies outside [0, 1].
    """
    x = _check_point(x)
    if x >= kv.knots[-1]:
        return kv.numdofs - 1
    return int(np.searchsorted(kv.knots, x, side="right")) - 1


def _basis_table(kv: KnotVector, s: int, x: float, with_derivative: bool):
    # triangular Cox-de Boor recursion over the p+1 active functions
    p = kv.degree
    t = kv.knots
    left = np.zeros(p + 1)
    right = np.zeros(p + 1)
    ndu = np.zeros((p + 1, p + 1))
    ndu[0, 0] = 1.0
    for j in range(1, p + 1):
        left[j] = x - t[s + 1 - j]
        right[j] = t[s + j] - x
        saved = 0.0
        for r in range(j):
            ndu[j, r] = right[r + 1] + left[j - r]
            temp = ndu[r, j - 1] / ndu[j, r]
            ndu[r, j] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        ndu[j, j] = saved
    values = ndu[:, p].copy()
    if not with_derivative:
        return values, None
    ders = np.zeros(p + 1)
    for r in range(p + 1):
        d = 0.0
        if r >= 1:
            d += ndu[r - 1, p - 1] / ndu[p, r - 1]
        if r <= p - 1:
            d -= ndu[r, p - 1] / ndu[p, r]
        ders[r] = p * d
    return values, ders


def eval_basis(kv: KnotVector, x: float) -> Tuple[int, np.ndarray]:
    """Values of the ``p + 1`` possibly nonzero basis functions at `x`.

    Returns:
        Tuple[int, np.ndarray]: index of the first active function and the
        values of the active functions.
    """
    s = find_span(kv, x)
    values, _ = _basis_table(kv, s, _check_point(x), False)
    return s - kv.degree, values


def eval_basis_deriv(kv: KnotVector, x: float) -> Tuple[int, np.ndarray, np.ndarray]:
    """Values and first derivatives of the active basis functions at `x`."""
    s = find_span(kv, x)
    values, ders = _basis_table(kv, s, _check_point(x), True)
    return s - kv.degree, values, ders


def active_basis(kv: KnotVector, points, derivative: bool = False):
    """Active basis functions at many points.

    Returns:
        first indices ``(n,)``, values ``(n, p+1)`` and, with `derivative`,
        first derivatives ``(n, p+1)`` (otherwise ``None``).
    """
    points = np.atleast_1d(np.asarray(points, dtype=float))
    p = kv.degree
    first = np.empty(points.size, dtype=int)
    vals = np.empty((points.size, p + 1))
    ders = np.empty((points.size, p + 1)) if derivative else None
    for i, x in enumerate(points):
        s = find_span(kv, x)
        v, d = _basis_table(kv, s, _check_point(x), derivative)
        first[i] = s - p
        vals[i] = v
        if derivative:
            ders[i] = d
    return first, vals, ders


def collocation(kv: KnotVector, points, derivative: bool = False):
    """Sparse collocation matrix ``C[i, j] = N_j(points[i])``.

    Args:
        kv (KnotVector): the spline basis.
        points: evaluation points in [0, 1].
        derivative (bool): also return the matrix of first derivatives.

    Returns:
        A CSR matrix of shape ``(len(points), M)``, or a pair of them when
        `derivative` is set.
    """
    first, vals, ders = active_basis(kv, points, derivative)
    p = kv.degree
    n = first.size
    rows = np.repeat(np.arange(n), p + 1)
    cols = (first[:, None] + np.arange(p + 1)[None, :]).ravel()
    shape = (n, kv.numdofs)
    C = scipy.sparse.csr_matrix((vals.ravel(), (rows, cols)), shape=shape)
    if not derivative:
        return C
    return C, scipy.sparse.csr_matrix((ders.ravel(), (rows, cols)), shape=shape)


def uniform_refine(kv: KnotVector, levels: int) -> KnotVector:
    """Bisect every nonempty knot span `levels` times."""
    if levels < 0:
        raise DomainError(f"Refinement levels must be nonnegative, got {levels}")
    knots = kv.knots
    for _ in range(levels):
        mesh = np.unique(knots)
        midpoints = 0.5 * (mesh[1:] + mesh[:-1])
        knots = np.sort(np.concatenate([knots, midpoints]))
    return KnotVector(knots, kv.degree)


def prolongation(coarse: KnotVector, fine: KnotVector) -> scipy.sparse.csr_matrix:
    """Matrix expressing every coarse basis function in the fine basis.

    The coefficients are obtained by interpolation at the fine Greville
    abscissae, which is exact whenever the coarse space is nested in the
    fine one.
    """
    if coarse.degree != fine.degree:
        raise DomainError("Prolongation needs equal degrees")
    g = fine.greville()
    Cf = collocation(fine, g).tocsc()
    Cc = collocation(coarse, g).toarray()
    P = scipy.sparse.linalg.spsolve(Cf, Cc)
    P = np.atleast_2d(P).reshape(fine.numdofs, coarse.numdofs)
    P[np.abs(P) < 1e-13] = 0.0
    return scipy.sparse.csr_matrix(P)


class TensorSplineSpace:
    """Tensor product of two univariate spline bases on the unit square.

    Args:
        kvs (Sequence[KnotVector]): knot vectors of directions 1 and 2.
    """

    def __init__(self, kvs: Sequence[KnotVector]):
        kvs = tuple(kvs)
        if len(kvs) != 2:
            raise DimensionError(f"Expected 2 knot vectors, got {len(kvs)}")
        self.kvs = kvs

    def __repr__(self):
        return f"TensorSplineSpace({self.kvs!r})"

    def __eq__(self, other):
        return isinstance(other, TensorSplineSpace) and self.kvs == other.kvs

    def __hash__(self):
        return hash(self.kvs)

    @property
    def shape(self) -> Tuple[int, int]:
        """Basis dimensions ``(M1, M2)``."""
        return (self.kvs[0].numdofs, self.kvs[1].numdofs)

    @property
    def size(self) -> int:
        return self.kvs[0].numdofs * self.kvs[1].numdofs

    @property
    def degrees(self) -> Tuple[int, int]:
        return (self.kvs[0].degree, self.kvs[1].degree)

    @property
    def meshsize(self) -> float:
        """Parameter meshsize, the largest knot span of both directions."""
        return max(kv.meshsize for kv in self.kvs)

    def flat_index(self, i1, i2):
        return np.asarray(i1) * self.shape[1] + np.asarray(i2)

    def multi_index(self, i):
        return np.divmod(i, self.shape[1])

    def refine(self, levels: int) -> "TensorSplineSpace":
        return TensorSplineSpace([uniform_refine(kv, levels) for kv in self.kvs])

    def grid_collocation(self, x1, x2, derivative: bool = False):
        """Tensor collocation on the grid ``x1 x x2`` (row index ``q1 * n2 + q2``).

        Returns the value matrix, and with `derivative` additionally the
        matrices of the two parametric partial derivatives.
        """
        if not derivative:
            return scipy.sparse.kron(collocation(self.kvs[0], x1), collocation(self.kvs[1], x2), format="csr")
        B1, D1 = collocation(self.kvs[0], x1, derivative=True)
        B2, D2 = collocation(self.kvs[1], x2, derivative=True)
        return (
            scipy.sparse.kron(B1, B2, format="csr"),
            scipy.sparse.kron(D1, B2, format="csr"),
            scipy.sparse.kron(B1, D2, format="csr"),
        )

    def point_collocation(self, x1, x2, derivative: bool = False):
        """Tensor collocation at the scattered points ``(x1[q], x2[q])``.

        Same return convention as :meth:`grid_collocation`.
        """
        x1 = np.atleast_1d(np.asarray(x1, dtype=float))
        x2 = np.atleast_1d(np.asarray(x2, dtype=float))
        if x1.shape != x2.shape:
            raise DimensionError(f"Point coordinate arrays differ in shape: {x1.shape} vs {x2.shape}")
        f1, v1, d1 = active_basis(self.kvs[0], x1, derivative)
        f2, v2, d2 = active_basis(self.kvs[1], x2, derivative)
        n = x1.size
        a1 = f1[:, None, None] + np.arange(v1.shape[1])[None, :, None]
        a2 = f2[:, None, None] + np.arange(v2.shape[1])[None, None, :]
        cols = (a1 * self.shape[1] + a2).reshape(n, -1)
        rows = np.repeat(np.arange(n), cols.shape[1])
        shape = (n, self.size)

        def build(w1, w2):
            data = (w1[:, :, None] * w2[:, None, :]).reshape(n, -1)
            return scipy.sparse.csr_matrix((data.ravel(), (rows, cols.ravel())), shape=shape)

        if not derivative:
            return build(v1, v2)
        return build(v1, v2), build(d1, v2), build(v1, d2)


def tensor_eval(space: TensorSplineSpace, coeffs, point) -> Tuple[float, np.ndarray]:
    """Value and parametric gradient of ``sum_i c_i N_i1(x1) N_i2(x2)``.

    Raises:
        DimensionError: If the number of coefficients is not ``M1 * M2``.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape[0] != space.size:
        raise DimensionError(f"Expected {space.size} coefficients, got {coeffs.shape[0]}")
    c = coeffs.reshape(space.shape + coeffs.shape[1:])
    f1, v1, d1 = eval_basis_deriv(space.kvs[0], point[0])
    f2, v2, d2 = eval_basis_deriv(space.kvs[1], point[1])
    block = c[f1:f1 + v1.size, f2:f2 + v2.size]
    value = np.einsum("i,j,ij...->...", v1, v2, block)
    gradient = np.stack([
        np.einsum("i,j,ij...->...", d1, v2, block),
        np.einsum("i,j,ij...->...", v1, d2, block),
    ], axis=-1)
    return value, gradient
