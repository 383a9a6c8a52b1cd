"""dG-norm, face L2-projection and coefficient-based discrete norms."""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
import scipy.linalg

from .assembly import (
    ExtendedTerms, FaceQuadrature, assemble_global, default_delta, extended_dof_map, extended_terms,
    extended_vector, face_quadrature, span_rule,
    volume_quadrature, volume_stiffness,
)
from .exceptions import DimensionError, NotPositiveDefiniteError, TopologyError
from .geometry import MultiPatch, Patch, compute_metrics, face_dofs, harmonic_average

logger = logging.getLogger(__name__)


def _check_size(coeffs, n: int, what: str) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (n,):
        raise DimensionError(f"Expected {n} {what} coefficients, got shape {coeffs.shape}")
    return coeffs


def _all_terms(mp: MultiPatch, delta: Optional[float]) -> List[ExtendedTerms]:
    h = [compute_metrics(p).h for p in mp.patches]
    return [extended_terms(mp, k, delta, h) for k in range(mp.numpatches)]


def local_dg_norm(terms: ExtendedTerms, u_ext) -> float:
    """Squared patch-local dG norm ``d^(k)(u, u)`` of an extended coefficient vector."""
    u = _check_size(u_ext, terms.dofmap.n_ext, "extended")
    return float(u @ (terms.A @ u) + u @ (terms.P @ u))


def dg_norm(mp: MultiPatch, u: Sequence[np.ndarray], delta: Optional[float] = None, extended: bool = False) -> float:
    """Squared dG norm, summed over all patches.

    Args:
        mp (MultiPatch): the multipatch domain.
        u: per patch either own coefficients (a function of ``V_h``) or,
            with `extended`, extended coefficient vectors (a function of
            ``V_{h,e}`` whose copies may differ from their owners).
        delta (float, optional): penalty parameter; ``(p+1)(p+2)`` by default.

    Returns:
        float: ``sum_k alpha_k |u_k|_{H1}^2 + sum_k sum_l delta alpha_k / h_kl ||u_kl - u_k||^2``.

    Raises:
        DimensionError: If a coefficient vector has the wrong size.
    """
    if len(u) != mp.numpatches:
        raise DimensionError(f"Expected coefficients for {mp.numpatches} patches, got {len(u)}")
    terms = _all_terms(mp, delta)
    if not extended:
        u = [_check_size(c, p.space.size, "own") for c, p in zip(u, mp.patches)]
        u = [extended_vector(t.dofmap, u) for t in terms]
    return sum(local_dg_norm(t, c) for t, c in zip(terms, u))


# --- face projection --------------------------------------------------------------

@dataclass
class FaceGram:
    """Mass matrices on one interface ``F^(kl)`` seen from patch ``k``.

    Attributes:
        mass: Gram matrix of the neighbor face basis (symmetric positive definite).
        mixed: ``int N_l,i N_k,j ds`` between neighbor face and own trace bases.
        quadrature: the face quadrature both are computed with.
    """
    mass: np.ndarray
    mixed: np.ndarray
    quadrature: FaceQuadrature

    def __post_init__(self):
        try:
            self._factor = scipy.linalg.cho_factor(self.mass)
        except np.linalg.LinAlgError as e:
            raise NotPositiveDefiniteError(f"Face Gram matrix is singular: {str(e)}") from e

    def project(self, v: np.ndarray) -> np.ndarray:
        return scipy.linalg.cho_solve(self._factor, self.mixed @ v)


def _find_face(mp: MultiPatch, k: int, l: int, side: Optional[str] = None):
    for _, own, other in mp.patch_interfaces(k):
        if other.patch == l and (side is None or own.side == side):
            return face_dofs(mp, own)
    raise TopologyError(f"Patch {k} has no interface with patch {l}")


def face_gram(mp: MultiPatch, k: int, l: int, side: Optional[str] = None) -> FaceGram:
    fq = face_quadrature(mp, _find_face(mp, k, l, side))
    Nl = fq.neighbor_trace.toarray()
    Nk = fq.own_trace.toarray()
    W = fq.weights[:, None]
    return FaceGram(mass=Nl.T @ (W * Nl), mixed=Nl.T @ (W * Nk), quadrature=fq)


def l2_project_face(mp: MultiPatch, k: int, l: int, v, side: Optional[str] = None) -> np.ndarray:
    """Coefficients of the L2-projection of an own trace onto the neighbor face space.

    Args:
        v: coefficients of the own trace on ``F^(kl)`` in side order.

    Returns:
        np.ndarray: coefficients in the neighbor face basis.
    """
    gram = face_gram(mp, k, l, side)
    v = _check_size(v, gram.mixed.shape[1], "trace")
    return gram.project(v)


def face_l2_distance(gram: FaceGram, v: np.ndarray, c: np.ndarray) -> float:
    """Squared face L2 norm of ``v - w`` for an own trace `v` and a neighbor face function `c`."""
    fq = gram.quadrature
    diff = fq.own_trace @ v - fq.neighbor_trace @ c
    return float(np.sum(fq.weights * diff ** 2))


def face_l2_norm(gram: FaceGram, c: np.ndarray) -> float:
    """Squared face L2 norm of a neighbor face function."""
    return float(c @ gram.mass @ c)


def projection_error_ratio(mp: MultiPatch, k: int, l: int, coeffs) -> float:
    """``||v - pi v||^2 / (h_l (h_l / h_k) |v|_{H1}^2)`` for own coefficients `coeffs` of patch `k`."""
    patch = mp.patches[k]
    coeffs = _check_size(coeffs, patch.space.size, "own")
    face = _find_face(mp, k, l)
    gram = face_gram(mp, k, l, face.own_side.side)
    v = coeffs[face.own_face]
    err = face_l2_distance(gram, v, gram.project(v))
    seminorm = float(coeffs @ (volume_stiffness(patch) @ coeffs)) / patch.alpha
    hk, hl = compute_metrics(patch).h, compute_metrics(mp.patches[l]).h
    return err / (hl * (hl / hk) * seminorm)


# --- discrete coefficient norms ------------------------------------------------------------

def discrete_norms(patch: Patch, coeffs) -> Dict[str, float]:
    """Coefficient-based discrete norms of an own patch function.

    Returns:
        Dict[str, float]: ``"box"`` (scaled l2 norm ``sum c^2 hhat^2``),
        ``"xi1"`` and ``"xi2"`` (squared first differences per direction),
        ``"grad"`` (their sum) and per side ``"box_<side>"``
        (``sum c^2 hhat`` over the side layer). All values are squared.
    """
    space = patch.space
    c = _check_size(coeffs, space.size, "own").reshape(space.shape)
    hhat = space.meshsize
    out = {
        "box": float(np.sum(c ** 2) * hhat ** 2),
        "xi1": float(np.sum(np.diff(c, axis=0) ** 2)),
        "xi2": float(np.sum(np.diff(c, axis=1) ** 2)),
    }
    out["grad"] = out["xi1"] + out["xi2"]
    layers = {"west": c[0, :], "east": c[-1, :], "south": c[:, 0], "north": c[:, -1]}
    for side, layer in layers.items():
        out[f"box_{side}"] = float(np.sum(layer ** 2) * hhat)
    return out


def parameter_l2_norm(patch: Patch, coeffs) -> float:
    """Squared L2 norm of the pulled-back function on the unit square."""
    space = patch.space
    c = _check_size(coeffs, space.size, "own")
    x1, w1 = span_rule(space.kvs[0])
    x2, w2 = span_rule(space.kvs[1])
    values = space.grid_collocation(x1, x2) @ c
    return float(np.sum(np.outer(w1, w2).ravel() * values ** 2))


def discrete_dg_norm(mp: MultiPatch, k: int, u_ext, delta: Optional[float] = None) -> float:
    """Squared discrete dG norm ``|u|_grad^2 + sum_l delta / hhat_kl |u_kl - pi u_kk|_box^2``.

    Args:
        u_ext: extended coefficient vector of patch `k` (own dofs followed
            by the neighbor copies in interface order).
    """
    delta = default_delta(mp) if delta is None else float(delta)
    dofmap = extended_dof_map(mp, k)
    u = _check_size(u_ext, dofmap.n_ext, "extended")
    patch = mp.patches[k]
    value = discrete_norms(patch, u[:dofmap.n_own])["grad"]
    hhat_k = patch.space.meshsize
    for i, face in enumerate(dofmap.faces):
        l = face.neighbor
        hhat_l = mp.patches[l].space.meshsize
        gram = face_gram(mp, k, l, face.own_side.side)
        ctilde = gram.project(u[face.own_face])
        jump = u[dofmap.copy_slice(i)] - ctilde
        value += delta / harmonic_average(hhat_k, hhat_l) * float(np.sum(jump ** 2) * hhat_l)
    return value


# --- errors against exact solutions -----------------------------------------------------

def l2_error(mp: MultiPatch, u: Sequence[np.ndarray], exact) -> float:
    """L2 error (not squared) of per-patch own coefficients against a callable."""
    total = 0.0
    for patch, c in zip(mp.patches, u):
        q = volume_quadrature(patch, max(patch.space.degrees) + 2)
        diff = q.values @ c - exact(q.points)
        total += float(np.sum(q.weights * diff ** 2))
    return float(np.sqrt(total))


def dg_error(mp: MultiPatch, u: Sequence[np.ndarray], exact, grad, delta: Optional[float] = None) -> float:
    """dG-norm error (not squared) against an exact solution with gradient `grad`.

    The exact solution is continuous, so the jump part only sees the
    discrete jumps ``[u_h]``.
    """
    total = 0.0
    terms = _all_terms(mp, delta)
    for k, (patch, c) in enumerate(zip(mp.patches, u)):
        q = volume_quadrature(patch, max(patch.space.degrees) + 2)
        g = grad(q.points)
        ex = q.grad_x @ c - g[:, 0]
        ey = q.grad_y @ c - g[:, 1]
        total += patch.alpha * float(np.sum(q.weights * (ex ** 2 + ey ** 2)))
        ue = extended_vector(terms[k].dofmap, u)
        total += float(ue @ (terms[k].P @ ue))
    return float(np.sqrt(total))


def equivalence_ratios(mp: MultiPatch, samples: int = 20, delta: Optional[float] = None, seed: int = 0) -> np.ndarray:
    """Ratios ``a_h(u, u) / ||u||_dG^2`` for random free coefficient vectors."""
    system = assemble_global(mp, delta)
    rng = np.random.default_rng(seed)
    ratios = []
    for _ in range(samples):
        x = rng.standard_normal(system.free.size)
        ratios.append(float(x @ (system.K @ x)) / float(x @ (system.D @ x)))
    ratios = np.array(ratios)
    logger.debug("a_h / dG ratios in [%.4g, %.4g]", ratios.min(), ratios.max())
    return ratios
