"""Dual-primal IETI solver for the extended dG patch systems.

Every patch keeps its full extended system ``K_e``; the extended boundary is
split into primal dofs (corner values, continuous across patches) and dual
dofs, whose continuity is enforced by Lagrange multipliers. The interface
problem ``F lambda = d`` is solved by PCG with the scaled Dirichlet
preconditioner, and the Lanczos matrix of the iteration yields the
condition number estimate.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse

from .assembly import PatchSystem, map_patches
from .exceptions import (
    ConfigurationError, DimensionError, NotPositiveDefiniteError, OracleSizeError, ParameterError,
)
from .geometry import MultiPatch, corner_dofs
from .linalg import DENSE_SIZE_LIMIT, DenseSpdFactorization, SpdFactorization, as_csr, dense_sym_eig
from .schur import PatchSchur

logger = logging.getLogger(__name__)

SCALINGS = ("multiplicity", "coefficient")


@dataclass
class PrimalConstraints:
    """Corner values kept continuous in the primal space.

    Attributes:
        keys: global primal dofs as ``(owner patch, owner own dof)``.
        local: per patch, local indices of its primal dofs (own corners and
            endpoints of neighbor copies).
        global_index: per patch, the global primal index of every entry of `local`.
    """
    keys: List[Tuple[int, int]]
    local: List[np.ndarray]
    global_index: List[np.ndarray]

    @property
    def size(self) -> int:
        return len(self.keys)

    def restriction(self, k: int) -> scipy.sparse.csr_matrix:
        g = self.global_index[k]
        return scipy.sparse.csr_matrix((np.ones(g.size), (np.arange(g.size), g)), shape=(g.size, self.size))


@dataclass
class JumpOperator:
    """Signed pairing of every dual copy dof with its owner dof.

    Attributes:
        pairs: per multiplier ``(patch, local copy index, owner patch, owner local index)``.
        on_boundary: per patch, ``B^(k)`` acting on the extended boundary values.
    """
    pairs: List[Tuple[int, int, int, int]]
    on_boundary: List[scipy.sparse.csr_matrix]

    @property
    def size(self) -> int:
        return len(self.pairs)

    def apply(self, u_B: List[np.ndarray]) -> np.ndarray:
        return sum((Bk @ u for Bk, u in zip(self.on_boundary, u_B)), np.zeros(self.size))


@dataclass
class ScaledJump:
    """Jump operator ``B_D`` with the scaling weights of every entry."""
    scaling: str
    on_boundary: List[scipy.sparse.csr_matrix]
    weights: np.ndarray


@dataclass
class CoarseProblem:
    """Energy-minimal primal basis and the assembled primal Schur matrix."""
    basis: List[np.ndarray]
    local_matrices: List[np.ndarray]
    S_PP: np.ndarray
    factor: DenseSpdFactorization


@dataclass
class PrimalDualVector:
    """An element of the partially continuous space: per patch dual boundary values, global primal values."""
    dual: List[np.ndarray]
    primal: np.ndarray

    def __mul__(self, c: float) -> "PrimalDualVector":
        return PrimalDualVector([c * d for d in self.dual], c * self.primal)

    __rmul__ = __mul__

    def flat(self) -> np.ndarray:
        return np.concatenate(self.dual + [self.primal])


@dataclass
class PcgResult:
    """Outcome of a PCG run.

    Attributes:
        x: the iterate at exit.
        iterations: number of operator applications.
        converged: whether the relative preconditioned residual reached `tol`.
        lambda_min, lambda_max: extreme eigenvalues of the Lanczos matrix.
        residuals: relative preconditioned residual after every iteration.
    """
    x: np.ndarray
    iterations: int
    converged: bool
    lambda_min: float = float("nan")
    lambda_max: float = float("nan")
    residuals: List[float] = field(default_factory=list)

    @property
    def kappa(self) -> float:
        if not np.isfinite(self.lambda_min) or self.lambda_min <= 0:
            return float("nan")
        return self.lambda_max / self.lambda_min


@dataclass
class RecoveredSolution:
    """Solution assembled from a multiplier vector.

    Attributes:
        local: per patch, the local vector ``[interior, boundary]``.
        patches: per patch, own coefficients (zero on Dirichlet dofs).
        jump: ``B u`` of the recovered boundary values.
    """
    local: List[np.ndarray]
    patches: List[np.ndarray]
    jump: np.ndarray

    @property
    def jump_residual(self) -> float:
        return float(np.max(np.abs(self.jump))) if self.jump.size else 0.0


def _lanczos_extremes(alphas, betas) -> Tuple[float, float]:
    # tridiagonal Lanczos matrix built from the CG coefficients
    n = len(alphas)
    if n == 0:
        return float("nan"), float("nan")
    a = np.asarray(alphas, dtype=float)
    b = np.asarray(betas[:n - 1], dtype=float)
    diag = 1.0 / a
    diag[1:] += b / a[:-1]
    off = np.sqrt(b) / a[:-1]
    if n == 1:
        return float(diag[0]), float(diag[0])
    ev = scipy.linalg.eigh_tridiagonal(diag, off, eigvals_only=True)
    return float(ev[0]), float(ev[-1])


def pcg_solve(apply_F: Callable[[np.ndarray], np.ndarray], apply_M: Callable[[np.ndarray], np.ndarray],
              d: np.ndarray, tol: float = 1e-8, maxit: int = 500) -> PcgResult:
    """Preconditioned conjugate gradients with Lanczos eigenvalue estimates.

    Stops once ``sqrt(r.z) <= tol * sqrt(r0.z0)``. Hitting `maxit` is
    reported through ``converged=False``.

    Raises:
        ParameterError: If `tol` is not in (0, 1) or `maxit` is not positive.
    """
    if not 0 < tol < 1:
        raise ParameterError(f"Tolerance must lie in (0, 1), got {tol}")
    if maxit < 1:
        raise ParameterError(f"maxit must be positive, got {maxit}")
    d = np.asarray(d, dtype=float)
    x = np.zeros_like(d)
    r = d.copy()
    z = apply_M(r)
    rz = float(r @ z)
    if rz <= 0.0:
        return PcgResult(x=x, iterations=0, converged=True)
    rz0 = rz
    p = z.copy()
    alphas, betas, residuals = [], [], []
    converged = False
    it = 0
    for it in range(1, maxit + 1):
        Fp = apply_F(p)
        pFp = float(p @ Fp)
        if pFp <= 0.0:
            logger.warning("PCG breakdown: p^T F p = %.3e at iteration %d", pFp, it)
            break
        alpha = rz / pFp
        x += alpha * p
        r -= alpha * Fp
        alphas.append(alpha)
        z = apply_M(r)
        rz_new = float(r @ z)
        rel = np.sqrt(max(rz_new, 0.0) / rz0)
        residuals.append(float(rel))
        logger.debug("PCG iteration %d: relative residual %.3e", it, rel)
        if rel <= tol:
            converged = True
            break
        beta = rz_new / rz
        betas.append(beta)
        p = z + beta * p
        rz = rz_new
    lmin, lmax = _lanczos_extremes(alphas, betas)
    if not converged:
        logger.warning("PCG did not converge in %d iterations (residual %.3e)", it, residuals[-1] if residuals else 1.0)
    return PcgResult(x=x, iterations=it, converged=converged, lambda_min=lmin, lambda_max=lmax, residuals=residuals)


class IetiDP:
    """Dual-primal IETI method on assembled patch systems.

    Primal values are vertex evaluations at the corners of each extended
    patch, so every patch contributes its own primal dof at a shared vertex:
    two patches meeting along a side with three dofs give four primal dofs,
    and only the middle copy on each side is dual (two multipliers).

    Args:
        mp (MultiPatch): the multipatch domain.
        systems (List[PatchSystem]): assembled patch systems, one per patch.
        scaling (str): ``"multiplicity"`` or ``"coefficient"`` weights for ``B_D``.
        workers (int): thread count for patch-local setup and preconditioning.

    Raises:
        ConfigurationError: If a dual block or the coarse matrix is singular,
            which means Dirichlet or primal constraints are missing.
    """

    def __init__(self, mp: MultiPatch, systems: List[PatchSystem], scaling: str = "multiplicity", workers: int = 1):
        if len(systems) != mp.numpatches:
            raise DimensionError(f"Expected {mp.numpatches} patch systems, got {len(systems)}")
        if scaling not in SCALINGS:
            raise ConfigurationError(f"Unknown scaling '{scaling}', expected one of {SCALINGS}")
        self.mp = mp
        self.systems = systems
        self.workers = workers
        self.schur = map_patches(PatchSchur, systems, workers)
        self.primal = self._primal_constraints()
        self._split()
        self.jump, self.scaled = self._jump_operators(scaling)
        self._factor_dual_blocks()
        self.coarse = self._coarse_problem()
        logger.info(
            "IETI-DP setup: %d patches, %d multipliers, %d primal dofs",
            mp.numpatches, self.jump.size, self.primal.size,
        )

    # -- setup ---------------------------------------------------------------------

    def _primal_constraints(self) -> PrimalConstraints:
        keys = set()
        for sysk in self.systems:
            dm = sysk.dofmap
            on_face = dm.boundary[:dm.n_own]
            for c in corner_dofs(self.mp.patches[sysk.patch].space):
                if on_face[c]:
                    keys.add((sysk.patch, int(c)))
        keys = sorted(keys)
        lookup = {key: i for i, key in enumerate(keys)}
        local, global_index = [], []
        for sysk in self.systems:
            dm = sysk.dofmap
            ext = dm.boundary_ext
            idx = [(dm.n_interior + j, lookup[(int(dm.owner_patch[e]), int(dm.owner_dof[e]))])
                   for j, e in enumerate(ext) if (int(dm.owner_patch[e]), int(dm.owner_dof[e])) in lookup]
            local.append(np.array([i for i, _ in idx], dtype=int))
            global_index.append(np.array([g for _, g in idx], dtype=int))
        return PrimalConstraints(keys=keys, local=local, global_index=global_index)

    def _split(self):
        self.r_local, self.dual_b, self.primal_b = [], [], []
        for sysk, prim in zip(self.systems, self.primal.local):
            n_loc = sysk.dofmap.n_local
            mask = np.ones(n_loc, dtype=bool)
            mask[prim] = False
            self.r_local.append(np.where(mask)[0])
            self.dual_b.append(np.where(mask[sysk.n_interior:])[0])
            self.primal_b.append(prim - sysk.n_interior)

    def _jump_operators(self, scaling: str):
        to_local = [sysk.dofmap.ext_to_local() for sysk in self.systems]
        alpha = [p.alpha for p in self.mp.patches]
        pairs, weights = [], []
        primal_keys = set(self.primal.keys)
        for sysk in self.systems:
            k, dm = sysk.patch, sysk.dofmap
            for j in range(sysk.n_interior, dm.n_local):
                e = dm.local_to_ext[j]
                if e < dm.n_own:
                    continue
                l, d = int(dm.owner_patch[e]), int(dm.owner_dof[e])
                if (l, d) in primal_keys:
                    continue
                pairs.append((k, j, l, int(to_local[l][d])))
                if scaling == "coefficient":
                    s = alpha[k] + alpha[l]
                    weights.append((alpha[l] / s, alpha[k] / s))
                else:
                    weights.append((0.5, 0.5))
        n = len(pairs)
        weights = np.array(weights).reshape(n, 2)
        B, BD = [], []
        for sysk in self.systems:
            k, nI = sysk.patch, sysk.n_interior
            entries = []
            for r, (kc, jc, ko, jo) in enumerate(pairs):
                if kc == k:
                    entries.append((r, jc - nI, 1.0, weights[r, 0]))
                if ko == k:
                    entries.append((r, jo - nI, -1.0, -weights[r, 1]))
            rows, cols, vals, dvals = (list(c) for c in zip(*entries)) if entries else ([], [], [], [])
            shape = (n, sysk.n_boundary)
            B.append(as_csr(scipy.sparse.csr_matrix((vals, (rows, cols)), shape=shape)))
            BD.append(as_csr(scipy.sparse.csr_matrix((dvals, (rows, cols)), shape=shape)))
        return JumpOperator(pairs, B), ScaledJump(scaling, BD, weights)

    def _factor_dual_blocks(self):
        def factor(k):
            K = self.systems[k].K
            r, P = self.r_local[k], self.primal.local[k]
            try:
                fact = SpdFactorization(K[r, :][:, r])
            except NotPositiveDefiniteError as e:
                raise ConfigurationError(
                    f"Dual block of patch {k} is singular; Dirichlet or primal constraints are missing: {str(e)}"
                ) from e
            return fact, K[r, :][:, P], K[P, :][:, P]

        out = map_patches(factor, range(self.mp.numpatches), self.workers)
        self.dual_factor = [o[0] for o in out]
        self._K_rP = [o[1] for o in out]
        self._K_PP = [o[2] for o in out]

    def _coarse_problem(self) -> CoarseProblem:
        basis, local = [], []
        S = np.zeros((self.primal.size, self.primal.size))
        for k in range(self.mp.numpatches):
            K_rP = self._K_rP[k].toarray()
            if K_rP.shape[1]:
                Phi = -self.dual_factor[k].solve(K_rP)
            else:
                Phi = np.zeros((self.r_local[k].size, 0))
            Sk = self._K_PP[k].toarray() + K_rP.T @ Phi
            Sk = 0.5 * (Sk + Sk.T)
            basis.append(Phi)
            local.append(Sk)
            gi = self.primal.global_index[k]
            np.add.at(S, (gi[:, None], gi[None, :]), Sk)
        try:
            factor = DenseSpdFactorization(S)
        except NotPositiveDefiniteError as e:
            raise ConfigurationError(f"Coarse primal matrix is singular: {str(e)}") from e
        return CoarseProblem(basis=basis, local_matrices=local, S_PP=S, factor=factor)

    # -- two-level solves ---------------------------------------------------------------

    def _two_level(self, b_r: List[np.ndarray], b_P: np.ndarray):
        y = [f.solve(b) for f, b in zip(self.dual_factor, b_r)]
        g = b_P.copy()
        for k, (Phi, b) in enumerate(zip(self.coarse.basis, b_r)):
            g += self.primal.restriction(k).T @ (Phi.T @ b)
        u_P = self.coarse.factor.solve(g)
        u_r = [yk + Phi @ u_P[gi] for yk, Phi, gi in zip(y, self.coarse.basis, self.primal.global_index)]
        return u_r, u_P

    def _local_vectors(self, u_r: List[np.ndarray], u_P: np.ndarray) -> List[np.ndarray]:
        out = []
        for sysk, r, P, gi, ur in zip(self.systems, self.r_local, self.primal.local, self.primal.global_index, u_r):
            w = np.zeros(sysk.dofmap.n_local)
            w[r] = ur
            w[P] = u_P[gi]
            out.append(w)
        return out

    def _embed_dual(self, values: List[np.ndarray]) -> List[np.ndarray]:
        # dual boundary values -> right-hand side on r = interior + dual
        out = []
        for sysk, r, v in zip(self.systems, self.r_local, values):
            b = np.zeros(r.size)
            b[sysk.n_interior:] = v
            out.append(b)
        return out

    def stilde_solve(self, b: PrimalDualVector) -> PrimalDualVector:
        """Apply ``S~^{-1}`` to a functional on the partially continuous space."""
        for k, (d, idx) in enumerate(zip(b.dual, self.dual_b)):
            if d.shape[0] != idx.size:
                raise DimensionError(f"Patch {k}: expected {idx.size} dual values, got {d.shape[0]}")
        if b.primal.shape[0] != self.primal.size:
            raise DimensionError(f"Expected {self.primal.size} primal values, got {b.primal.shape[0]}")
        u_r, u_P = self._two_level(self._embed_dual(b.dual), np.asarray(b.primal, dtype=float))
        return PrimalDualVector([ur[sysk.n_interior:] for ur, sysk in zip(u_r, self.systems)], u_P)

    def apply_Stilde(self, w: PrimalDualVector) -> PrimalDualVector:
        """Apply ``S~`` by subassembling the patch Schur complements."""
        dual, primal = [], np.zeros(self.primal.size)
        for k, ps in enumerate(self.schur):
            u_B = np.zeros(ps.n_boundary)
            u_B[self.dual_b[k]] = w.dual[k]
            u_B[self.primal_b[k]] = w.primal[self.primal.global_index[k]]
            s = ps.apply(u_B)
            dual.append(s[self.dual_b[k]])
            np.add.at(primal, self.primal.global_index[k], s[self.primal_b[k]])
        return PrimalDualVector(dual, primal)

    def dual_values(self, u_B: List[np.ndarray]) -> List[np.ndarray]:
        return [u[idx] for u, idx in zip(u_B, self.dual_b)]

    def apply_Bt(self, lam: np.ndarray) -> List[np.ndarray]:
        """``B~^T lambda`` as dual boundary values per patch."""
        return [(Bk.T @ lam)[idx] for Bk, idx in zip(self.jump.on_boundary, self.dual_b)]

    def apply_B(self, dual: List[np.ndarray]) -> np.ndarray:
        out = np.zeros(self.jump.size)
        for Bk, idx, v in zip(self.jump.on_boundary, self.dual_b, dual):
            out += Bk[:, idx] @ v
        return out

    def apply_F(self, lam) -> np.ndarray:
        """``F lambda = B~ S~^{-1} B~^T lambda``."""
        lam = self._check_multipliers(lam)
        u = self.stilde_solve(PrimalDualVector(self.apply_Bt(lam), np.zeros(self.primal.size)))
        return self.apply_B(u.dual)

    def apply_MsD_inv(self, r) -> np.ndarray:
        """Scaled Dirichlet preconditioner ``B_D S_e B_D^T r``."""
        r = self._check_multipliers(r)

        def local(k):
            BD = self.scaled.on_boundary[k]
            return BD @ self.schur[k].apply(BD.T @ r)

        return sum(map_patches(local, range(self.mp.numpatches), self.workers), np.zeros(self.jump.size))

    def _check_multipliers(self, lam) -> np.ndarray:
        lam = np.asarray(lam, dtype=float)
        if lam.shape != (self.jump.size,):
            raise DimensionError(f"Expected {self.jump.size} multipliers, got shape {lam.shape}")
        return lam

    # -- loads, solve and recovery ------------------------------------------------------

    def _load(self):
        b_r = [sysk.f[r] for sysk, r in zip(self.systems, self.r_local)]
        b_P = np.zeros(self.primal.size)
        for sysk, P, gi in zip(self.systems, self.primal.local, self.primal.global_index):
            np.add.at(b_P, gi, sysk.f[P])
        return b_r, b_P

    def rhs(self) -> np.ndarray:
        """``d = B~ K~^{-1} f`` from the full patch loads (interior loads included)."""
        u_r, _ = self._two_level(*self._load())
        return self.apply_B([ur[sysk.n_interior:] for ur, sysk in zip(u_r, self.systems)])

    def recover_solution(self, lam) -> RecoveredSolution:
        """Solution for given multipliers: ``u = K~^{-1}(f - B~^T lambda)``, interiors by extension."""
        lam = self._check_multipliers(lam)
        b_r, b_P = self._load()
        for b, bt, sysk in zip(b_r, self.apply_Bt(lam), self.systems):
            b[sysk.n_interior:] -= bt
        u_r, u_P = self._two_level(b_r, b_P)
        local = self._local_vectors(u_r, u_P)
        patches = []
        for sysk, ps, w in zip(self.systems, self.schur, local):
            nI = sysk.n_interior
            w[:nI] = ps.interior_solution(w[nI:], sysk.f_I)
            own = np.zeros(sysk.dofmap.n_own)
            ext = sysk.dofmap.local_to_ext
            is_own = ext < sysk.dofmap.n_own
            own[ext[is_own]] = w[is_own]
            patches.append(own)
        jump = self.jump.apply([w[sysk.n_interior:] for w, sysk in zip(local, self.systems)])
        return RecoveredSolution(local=local, patches=patches, jump=jump)

    def solve(self, tol: float = 1e-8, maxit: int = 500):
        """Run PCG on ``F lambda = d`` and recover the solution.

        Returns:
            Tuple[PcgResult, RecoveredSolution]
        """
        result = pcg_solve(self.apply_F, self.apply_MsD_inv, self.rhs(), tol, maxit)
        logger.info("PCG: %d iterations, converged=%s, kappa~%.4g", result.iterations, result.converged, result.kappa)
        return result, self.recover_solution(result.x)

    # -- dense instruments ------------------------------------------------------------------

    def dense_operator(self, apply: Callable[[np.ndarray], np.ndarray], limit: Optional[int] = DENSE_SIZE_LIMIT) -> np.ndarray:
        n = self.jump.size
        if limit is not None and n > limit:
            raise OracleSizeError(f"{n} multipliers exceed the dense limit {limit}")
        M = np.column_stack([apply(e) for e in np.eye(n)]) if n else np.zeros((0, 0))
        return 0.5 * (M + M.T)


def build_ieti(mp: MultiPatch, systems: List[PatchSystem], scaling: str = "multiplicity", workers: int = 1) -> IetiDP:
    return IetiDP(mp, systems, scaling, workers)


def stilde_solve(ieti: IetiDP, b: PrimalDualVector) -> PrimalDualVector:
    return ieti.stilde_solve(b)


def apply_F(ieti: IetiDP, lam) -> np.ndarray:
    return ieti.apply_F(lam)


def apply_MsD_inv(ieti: IetiDP, r) -> np.ndarray:
    return ieti.apply_MsD_inv(r)


def recover_solution(ieti: IetiDP, lam) -> RecoveredSolution:
    return ieti.recover_solution(lam)


def dense_spectrum_oracle(ieti: IetiDP, limit: Optional[int] = DENSE_SIZE_LIMIT, rtol: float = 1e-10) -> np.ndarray:
    """All eigenvalues of ``M_sD^{-1} F`` on the range of ``F``, ascending.

    Solves ``F M^{-1} F x = mu F x`` after restricting to the eigenvectors
    of ``F`` above ``rtol * max(eig F)``.

    Raises:
        OracleSizeError: If the multiplier count exceeds `limit`.
    """
    F = ieti.dense_operator(ieti.apply_F, limit)
    if F.shape[0] == 0:
        return np.zeros(0)
    M = ieti.dense_operator(ieti.apply_MsD_inv, limit)
    ev, Q = dense_sym_eig(F, vectors=True, limit=limit)
    Q = Q[:, ev > rtol * ev[-1]]
    Fr = Q.T @ F @ Q
    Ar = Q.T @ F @ M @ F @ Q
    return dense_sym_eig(0.5 * (Ar + Ar.T), B=0.5 * (Fr + Fr.T), limit=limit)


def spectrum_summary(eigenvalues: np.ndarray) -> Dict[str, float]:
    if eigenvalues.size == 0:
        return {"lambda_min": float("nan"), "lambda_max": float("nan"), "kappa": float("nan")}
    lmin, lmax = float(eigenvalues[0]), float(eigenvalues[-1])
    return {"lambda_min": lmin, "lambda_max": lmax, "kappa": lmax / lmin}
