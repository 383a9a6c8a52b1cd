"""Per-patch Schur complements and discrete harmonic extensions.

The interior block ``K_II`` of every patch system is factorized once and
reused by all applications. Nothing here forms a Schur complement densely
except :meth:`PatchSchur.dense_schur`, which exists for spectral checks.
"""

import logging
from typing import Dict, Optional

import numpy as np

from .assembly import PatchSystem
from .exceptions import DimensionError, FactorizationError, NotPositiveDefiniteError, OracleSizeError
from .linalg import DENSE_SIZE_LIMIT, SpdFactorization

logger = logging.getLogger(__name__)


class PatchSchur:
    """Schur complement ``S_e = K_BB - K_BI K_II^{-1} K_IB`` of one patch system.

    Args:
        system (PatchSystem): assembled, Dirichlet-reduced patch system.

    Raises:
        FactorizationError: If the interior block is not positive definite.
    """

    def __init__(self, system: PatchSystem):
        self.system = system
        self.n_interior = system.n_interior
        self.n_boundary = system.n_boundary
        self.K_II = system.K_II
        self.K_IB = system.K_IB
        self.K_BI = system.K_BI
        self.K_BB = system.K_BB
        try:
            self.interior = SpdFactorization(self.K_II)
        except NotPositiveDefiniteError as e:
            raise FactorizationError(f"Interior block of patch {system.patch} is singular: {str(e)}") from e
        self._volume_interior = None

    def __repr__(self):
        return f"PatchSchur(patch={self.system.patch}, interior={self.n_interior}, boundary={self.n_boundary})"

    def _check(self, u_B) -> np.ndarray:
        u_B = np.asarray(u_B, dtype=float)
        if u_B.shape[0] != self.n_boundary:
            raise DimensionError(f"Expected {self.n_boundary} boundary values, got {u_B.shape[0]}")
        return u_B

    @property
    def volume_interior(self) -> SpdFactorization:
        """Factorization of the interior block of the volume term alone."""
        if self._volume_interior is None:
            n = self.n_interior
            try:
                self._volume_interior = SpdFactorization(self.system.A[:n, :][:, :n])
            except NotPositiveDefiniteError as e:
                raise FactorizationError(f"Volume interior block of patch {self.system.patch} is singular: {str(e)}") from e
        return self._volume_interior

    def apply(self, u_B) -> np.ndarray:
        u_B = self._check(u_B)
        return self.K_BB @ u_B - self.K_BI @ self.interior.solve(self.K_IB @ u_B)

    def extend_e(self, u_B) -> np.ndarray:
        return -self.interior.solve(self.K_IB @ self._check(u_B))

    def extend_a(self, u_B) -> np.ndarray:
        n = self.n_interior
        A_IB = self.system.A[:n, :][:, n:]
        return -self.volume_interior.solve(A_IB @ self._check(u_B))

    def interior_solution(self, u_B, f_I: Optional[np.ndarray] = None) -> np.ndarray:
        """Interior values ``K_II^{-1} (f_I - K_IB u_B)``."""
        rhs = -(self.K_IB @ self._check(u_B))
        if f_I is not None:
            rhs = rhs + f_I
        return self.interior.solve(rhs)

    def assemble_local(self, u_I, u_B) -> np.ndarray:
        return np.concatenate([u_I, u_B])

    def energy_e(self, w) -> float:
        """``a_e(w, w)`` of a local vector ``[interior, boundary]``."""
        return float(w @ (self.system.K @ w))

    def local_dg_energy(self, w) -> float:
        """Local dG energy ``d(w, w) = a(w, w) + p(w, w)``."""
        return float(w @ (self.system.dg_matrix() @ w))

    def dense_schur(self, limit: Optional[int] = DENSE_SIZE_LIMIT) -> np.ndarray:
        """Dense Schur complement.

        Raises:
            OracleSizeError: If the boundary exceeds `limit` dofs.
        """
        if limit is not None and self.n_boundary > limit:
            raise OracleSizeError(f"Dense Schur complement of size {self.n_boundary} exceeds the limit {limit}")
        X = self.interior.solve(self.K_IB.toarray()) if self.n_interior else np.zeros((0, self.n_boundary))
        S = self.K_BB.toarray() - self.K_BI @ X
        return 0.5 * (S + S.T)


def build_schur(system: PatchSystem) -> PatchSchur:
    return PatchSchur(system)


def schur_apply(ps: PatchSchur, u_B) -> np.ndarray:
    """``S_e u_B`` without forming ``S_e``."""
    return ps.apply(u_B)


def harmonic_extension_e(ps: PatchSchur, u_B) -> np.ndarray:
    """Interior values of the discrete harmonic extension with respect to ``a_e``."""
    return ps.extend_e(u_B)


def harmonic_extension_a(ps: PatchSchur, u_B) -> np.ndarray:
    """Interior values of the discrete harmonic extension with respect to ``a`` alone.

    Copies of neighbor face dofs carry no volume coupling and stay given data.
    """
    return ps.extend_a(u_B)


def harmonic_extension_ratios(ps: PatchSchur, samples: int = 20, seed: int = 0) -> Dict[str, np.ndarray]:
    """Measured quantities comparing both harmonic extensions on random boundary data.

    Returns:
        Dict[str, np.ndarray]: ``"d_a"`` and ``"d_e"`` (local dG energies of
        both extensions), ``"ratio"`` (``d_e / d_a``) and ``"energy_ratio"``
        (``a_e(H_e u, H_e u) / d_a``).
    """
    rng = np.random.default_rng(seed)
    d_a, d_e, a_e = [], [], []
    for _ in range(samples):
        u_B = rng.standard_normal(ps.n_boundary)
        w_a = ps.assemble_local(ps.extend_a(u_B), u_B)
        w_e = ps.assemble_local(ps.extend_e(u_B), u_B)
        d_a.append(ps.local_dg_energy(w_a))
        d_e.append(ps.local_dg_energy(w_e))
        a_e.append(ps.energy_e(w_e))
    d_a, d_e, a_e = map(np.array, (d_a, d_e, a_e))
    ratio = d_e / d_a
    logger.debug("patch %d: d(H_e u)/d(H u) in [%.4g, %.4g]", ps.system.patch, ratio.min(), ratio.max())
    return {"d_a": d_a, "d_e": d_e, "ratio": ratio, "energy_ratio": a_e / d_a}
