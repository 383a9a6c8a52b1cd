"""Assembly of the extended patch systems of the SIP-dG discretization.

For every patch ``k`` the extended space carries the own tensor-product
dofs followed by copies of the neighbor face dofs, one block per interface.
The extended stiffness is the sum of the volume term ``a``, the symmetric
consistency term ``s`` and the penalty term ``p``. Dirichlet dofs (own dofs
on Dirichlet sides and copies of such dofs) are removed; the remaining
dofs are ordered interior first, then extended boundary.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse

from .bspline import KnotVector, collocation
from .exceptions import ParameterError, TopologyError
from .geometry import FaceDofs, MultiPatch, Patch, Side, compute_metrics, face_dof_sets, harmonic_average
from .linalg import SpdFactorization, as_csr

logger = logging.getLogger(__name__)

LoadFunction = Callable[[np.ndarray], np.ndarray]
FluxFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]


def default_delta(mp: MultiPatch, dim: int = 2) -> float:
    """Penalty ``(p+1)(p+d)`` with ``p`` the largest solution degree."""
    p = max(max(patch.space.degrees) for patch in mp.patches)
    return float((p + 1) * (p + dim))


def gauss_rule(breaks: np.ndarray, npts: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre rule with `npts` points on every interval of `breaks`."""
    x, w = np.polynomial.legendre.leggauss(npts)
    a, b = breaks[:-1, None], breaks[1:, None]
    points = 0.5 * (a + b) + 0.5 * (b - a) * x[None, :]
    weights = 0.5 * (b - a) * w[None, :]
    return points.ravel(), weights.ravel()


def span_rule(kv: KnotVector, npts: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    return gauss_rule(kv.mesh, npts if npts is not None else kv.degree + 1)


def _merge_breaks(a: np.ndarray, b: np.ndarray, tol: float = 1e-13) -> np.ndarray:
    merged = np.unique(np.concatenate([a, b]))
    keep = np.concatenate([[True], np.diff(merged) > tol])
    return merged[keep]


# --- volume terms -----------------------------------------------------------------

@dataclass
class VolumeQuadrature:
    """Basis values and physical gradients at the volume quadrature points."""
    points: np.ndarray
    weights: np.ndarray
    values: scipy.sparse.csr_matrix
    grad_x: scipy.sparse.csr_matrix
    grad_y: scipy.sparse.csr_matrix


def volume_quadrature(patch: Patch, order: Optional[int] = None) -> VolumeQuadrature:
    """Tensor Gauss quadrature with ``p+1`` (or `order`) points per span and direction."""
    kv1, kv2 = patch.space.kvs
    x1, w1 = span_rule(kv1, order)
    x2, w2 = span_rule(kv2, order)
    points, jac = patch.map_grid(x1, x2)
    det = np.linalg.det(jac)
    jinv = np.linalg.inv(jac)
    B, D1, D2 = patch.space.grid_collocation(x1, x2, derivative=True)
    # physical gradient = J^{-T} (d1, d2)
    gx = scipy.sparse.diags(jinv[:, 0, 0]) @ D1 + scipy.sparse.diags(jinv[:, 1, 0]) @ D2
    gy = scipy.sparse.diags(jinv[:, 0, 1]) @ D1 + scipy.sparse.diags(jinv[:, 1, 1]) @ D2
    weights = np.outer(w1, w2).ravel() * np.abs(det)
    return VolumeQuadrature(points, weights, B, as_csr(gx), as_csr(gy))


def volume_stiffness(patch: Patch, order: Optional[int] = None) -> scipy.sparse.csr_matrix:
    """Matrix of ``alpha * int grad N_i . grad N_j dx`` over the own dofs."""
    q = volume_quadrature(patch, order)
    W = scipy.sparse.diags(q.weights)
    K = q.grad_x.T @ W @ q.grad_x + q.grad_y.T @ W @ q.grad_y
    return as_csr(patch.alpha * K)


def volume_mass(patch: Patch, order: Optional[int] = None) -> scipy.sparse.csr_matrix:
    q = volume_quadrature(patch, order)
    return as_csr(q.values.T @ scipy.sparse.diags(q.weights) @ q.values)


# --- extended dof maps ---------------------------------------------------------------

@dataclass
class ExtendedDofMap:
    """Extended dof numbering of one patch.

    Extended indices are the own dofs ``0 .. n_own-1`` followed by the
    neighbor copies, one contiguous block per face. Every extended dof
    records its owner ``(patch, own dof)``. The local numbering keeps the
    free dofs only, interior first.
    """
    patch: int
    n_own: int
    faces: List[FaceDofs]
    copy_offsets: List[int]
    owner_patch: np.ndarray
    owner_dof: np.ndarray
    free: np.ndarray
    boundary: np.ndarray
    local_to_ext: np.ndarray
    n_interior: int

    @property
    def n_ext(self) -> int:
        return self.owner_patch.size

    @property
    def n_local(self) -> int:
        return self.local_to_ext.size

    @property
    def n_boundary(self) -> int:
        return self.n_local - self.n_interior

    @property
    def interior_ext(self) -> np.ndarray:
        return self.local_to_ext[:self.n_interior]

    @property
    def boundary_ext(self) -> np.ndarray:
        return self.local_to_ext[self.n_interior:]

    def ext_to_local(self) -> np.ndarray:
        """Array mapping extended indices to local ones (-1 for eliminated dofs)."""
        out = -np.ones(self.n_ext, dtype=int)
        out[self.local_to_ext] = np.arange(self.n_local)
        return out

    def copy_slice(self, face_index: int) -> slice:
        o = self.copy_offsets[face_index]
        return slice(o, o + self.faces[face_index].neighbor_face.size)

    def is_copy(self) -> np.ndarray:
        return np.arange(self.n_ext) >= self.n_own


def extended_dof_map(mp: MultiPatch, k: int) -> ExtendedDofMap:
    sets = face_dof_sets(mp, k)
    n_own = sets.own.size
    owner_patch = [np.full(n_own, k)]
    owner_dof = [sets.own]
    offsets = []
    o = n_own
    for f in sets.faces:
        offsets.append(o)
        owner_patch.append(np.full(f.neighbor_face.size, f.neighbor))
        owner_dof.append(f.neighbor_face)
        o += f.neighbor_face.size
    owner_patch = np.concatenate(owner_patch)
    owner_dof = np.concatenate(owner_dof)
    dirichlet = {l: set(mp.dirichlet_dofs(l).tolist()) for l in set(owner_patch.tolist())}
    free = np.array([d not in dirichlet[l] for l, d in zip(owner_patch, owner_dof)], dtype=bool)
    boundary = np.zeros(owner_patch.size, dtype=bool)
    for f in sets.faces:
        boundary[f.own_face] = True
    boundary[n_own:] = True
    boundary &= free
    interior = np.where(free & ~boundary)[0]
    local_to_ext = np.concatenate([interior, np.where(boundary)[0]])
    return ExtendedDofMap(
        patch=k, n_own=n_own, faces=sets.faces, copy_offsets=offsets,
        owner_patch=owner_patch, owner_dof=owner_dof, free=free, boundary=boundary,
        local_to_ext=local_to_ext, n_interior=interior.size,
    )


# --- face terms ---------------------------------------------------------------------------

@dataclass
class FaceQuadrature:
    """Quadrature on one interface seen from patch ``k``.

    Attributes:
        t: own side parameters; t_neighbor: matching neighbor side parameters.
        weights: quadrature weights including the physical line element.
        points, normals: physical points and outward unit normals of patch k.
        own_values: own tensor basis at the points, ``(nq, n_own)``.
        own_normal_derivative: normal derivative of the own basis, ``(nq, n_own)``.
        own_trace: own face basis in side order, ``(nq, M_own_face)``.
        neighbor_trace: neighbor face basis in neighbor side order, ``(nq, M_neighbor_face)``.
    """
    face: FaceDofs
    t: np.ndarray
    t_neighbor: np.ndarray
    weights: np.ndarray
    points: np.ndarray
    normals: np.ndarray
    own_values: scipy.sparse.csr_matrix
    own_normal_derivative: scipy.sparse.csr_matrix
    own_trace: scipy.sparse.csr_matrix
    neighbor_trace: scipy.sparse.csr_matrix


def side_quadrature(patch: Patch, side: Side, t: np.ndarray, w: np.ndarray):
    """Physical points, weights, outward normals and basis data on a side.

    Returns:
        points, physical weights, unit normals, basis values and basis
        normal derivatives at the side parameters `t`.
    """
    x1, x2 = side.parameters(t)
    points, jac = patch.map_points(x1, x2)
    ds = np.linalg.norm(jac[:, :, side.tangent_axis], axis=1)
    jinv = np.linalg.inv(jac)
    nhat = np.zeros(2)
    nhat[side.normal_axis] = 1.0 if side.value == 1.0 else -1.0
    normals = np.einsum("qba,b->qa", jinv, nhat)
    normals /= np.linalg.norm(normals, axis=1)[:, None]
    B, D1, D2 = patch.space.point_collocation(x1, x2, derivative=True)
    # d/dn = sum_b (sum_a n_a Jinv[b, a]) d/dx_b
    c = np.einsum("qba,qa->qb", jinv, normals)
    Dn = scipy.sparse.diags(c[:, 0]) @ D1 + scipy.sparse.diags(c[:, 1]) @ D2
    return points, w * ds, normals, B, as_csr(Dn)


def face_quadrature(mp: MultiPatch, face: FaceDofs) -> FaceQuadrature:
    """Quadrature on the merged partition of both sides of an interface."""
    k, l = face.own_side.patch, face.neighbor
    own_kv = mp.patches[k].space.kvs[face.own_side.tangent_axis]
    nb_kv = mp.patches[l].space.kvs[face.neighbor_side.tangent_axis]
    nb_breaks = nb_kv.mesh
    if face.reversed:
        nb_breaks = 1.0 - nb_breaks[::-1]
    breaks = _merge_breaks(own_kv.mesh, nb_breaks)
    t, w = gauss_rule(breaks, max(own_kv.degree, nb_kv.degree) + 1)
    t_nb = 1.0 - t if face.reversed else t
    points, weights, normals, B, Dn = side_quadrature(mp.patches[k], face.own_side, t, w)
    return FaceQuadrature(
        face=face, t=t, t_neighbor=t_nb, weights=weights, points=points, normals=normals,
        own_values=B, own_normal_derivative=Dn,
        own_trace=collocation(own_kv, t), neighbor_trace=collocation(nb_kv, t_nb),
    )


def _embed(M: scipy.sparse.spmatrix, cols: np.ndarray, n: int) -> scipy.sparse.csr_matrix:
    """Place the columns of `M` at positions `cols` of an `n`-column matrix."""
    E = scipy.sparse.csr_matrix((np.ones(cols.size), (np.arange(cols.size), cols)), shape=(cols.size, n))
    return as_csr(M @ E)


def _jump_matrices(fq: FaceQuadrature, n_ext: int, copy_cols: np.ndarray, n_own: int):
    own = _embed(fq.own_values, np.arange(n_own), n_ext)
    jump = _embed(fq.neighbor_trace, copy_cols, n_ext) - own
    dn = _embed(fq.own_normal_derivative, np.arange(n_own), n_ext)
    return as_csr(jump), dn


def interface_matrices(mp: MultiPatch, dofmap: ExtendedDofMap, face_index: int, delta: float, h: Sequence[float]):
    """Consistency and penalty matrices of one face in extended numbering.

    Returns:
        Tuple of the ``s`` matrix, the ``p`` matrix and the face quadrature.
    """
    face = dofmap.faces[face_index]
    k, l = face.own_side.patch, face.neighbor
    alpha = mp.patches[k].alpha
    fq = face_quadrature(mp, face)
    s = dofmap.copy_slice(face_index)
    jump, dn = _jump_matrices(fq, dofmap.n_ext, np.arange(s.start, s.stop), dofmap.n_own)
    W = scipy.sparse.diags(fq.weights)
    S = 0.5 * alpha * (dn.T @ W @ jump + jump.T @ W @ dn)
    P = (delta * alpha / harmonic_average(h[k], h[l])) * (jump.T @ W @ jump)
    return as_csr(S), as_csr(P), fq


def interface_terms(mp: MultiPatch, k: int, l: int, delta: Optional[float] = None):
    """Contributions of ``s^(k)`` and ``p^(k)`` on the faces shared with patch `l`.

    Returns:
        Tuple[csr_matrix, csr_matrix]: the consistency and penalty matrices in
        the extended numbering of patch `k`.

    Raises:
        TopologyError: If `k` and `l` share no interface.
    """
    dofmap = extended_dof_map(mp, k)
    faces = [i for i, f in enumerate(dofmap.faces) if f.neighbor == l]
    if not faces:
        raise TopologyError(f"Patches {k} and {l} share no interface")
    delta = default_delta(mp) if delta is None else delta
    h = [compute_metrics(p).h for p in mp.patches]
    S = scipy.sparse.csr_matrix((dofmap.n_ext, dofmap.n_ext))
    P = scipy.sparse.csr_matrix((dofmap.n_ext, dofmap.n_ext))
    for i in faces:
        Si, Pi, _ = interface_matrices(mp, dofmap, i, delta, h)
        S, P = S + Si, P + Pi
    return as_csr(S), as_csr(P)


# --- loads ---------------------------------------------------------------------------------

def assemble_load(mp: MultiPatch, k: int, f: Optional[LoadFunction] = None, g_N: Optional[FluxFunction] = None) -> np.ndarray:
    """Own load vector ``int f v dx + int_{Gamma_N} g_N v ds`` of patch `k`.

    Args:
        f: volume source, called with ``(n, 2)`` physical points.
        g_N: Neumann data, called with physical points and outward normals.
    """
    patch = mp.patches[k]
    load = np.zeros(patch.space.size)
    if f is not None:
        q = volume_quadrature(patch)
        load += q.values.T @ (q.weights * f(q.points))
    if g_N is not None:
        for side in mp.neumann_sides:
            if side.patch != k:
                continue
            kv = patch.space.kvs[side.tangent_axis]
            t, w = span_rule(kv)
            points, weights, normals, B, _ = side_quadrature(patch, side, t, w)
            load += B.T @ (weights * g_N(points, normals))
    return load


# --- patch systems ----------------------------------------------------------------------

@dataclass
class PatchSystem:
    """Assembled, Dirichlet-reduced extended system of one patch.

    All matrices use the local numbering ``[interior, boundary]`` of
    :attr:`dofmap`. ``K = A + S + P`` where ``A`` is the volume term, ``S``
    the consistency term and ``P`` the penalty term.
    """
    patch: int
    dofmap: ExtendedDofMap
    delta: float
    K: scipy.sparse.csr_matrix
    A: scipy.sparse.csr_matrix
    S: scipy.sparse.csr_matrix
    P: scipy.sparse.csr_matrix
    f: np.ndarray
    faces: List[FaceQuadrature] = field(default_factory=list)

    @property
    def n_interior(self) -> int:
        return self.dofmap.n_interior

    @property
    def n_boundary(self) -> int:
        return self.dofmap.n_boundary

    def _block(self, M, a: str, b: str):
        n = self.n_interior
        sl = {"I": slice(0, n), "B": slice(n, None)}
        return M[sl[a], :][:, sl[b]]

    @property
    def K_II(self):
        return self._block(self.K, "I", "I")

    @property
    def K_IB(self):
        return self._block(self.K, "I", "B")

    @property
    def K_BI(self):
        return self._block(self.K, "B", "I")

    @property
    def K_BB(self):
        return self._block(self.K, "B", "B")

    @property
    def f_I(self) -> np.ndarray:
        return self.f[:self.n_interior]

    @property
    def f_B(self) -> np.ndarray:
        return self.f[self.n_interior:]

    def dg_matrix(self) -> scipy.sparse.csr_matrix:
        """Matrix of the patch-local dG energy ``a + p``."""
        return as_csr(self.A + self.P)


@dataclass
class ExtendedTerms:
    """Unreduced ``a``, ``s`` and ``p`` matrices of a patch in extended numbering."""
    dofmap: ExtendedDofMap
    A: scipy.sparse.csr_matrix
    S: scipy.sparse.csr_matrix
    P: scipy.sparse.csr_matrix
    faces: List[FaceQuadrature]


def _check_delta(delta: float) -> float:
    delta = float(delta)
    if not delta > 0:
        raise ParameterError(f"Penalty parameter must be positive, got {delta}")
    return delta


def extended_terms(mp: MultiPatch, k: int, delta: Optional[float] = None, h: Optional[Sequence[float]] = None) -> ExtendedTerms:
    delta = _check_delta(default_delta(mp) if delta is None else delta)
    if h is None:
        h = [compute_metrics(p).h for p in mp.patches]
    dofmap = extended_dof_map(mp, k)
    n_ext = dofmap.n_ext
    E = scipy.sparse.csr_matrix((np.ones(dofmap.n_own), (np.arange(dofmap.n_own), np.arange(dofmap.n_own))), shape=(dofmap.n_own, n_ext))
    A = E.T @ volume_stiffness(mp.patches[k]) @ E
    S = scipy.sparse.csr_matrix((n_ext, n_ext))
    P = scipy.sparse.csr_matrix((n_ext, n_ext))
    faces = []
    for i in range(len(dofmap.faces)):
        Si, Pi, fq = interface_matrices(mp, dofmap, i, delta, h)
        S, P = S + Si, P + Pi
        faces.append(fq)
    return ExtendedTerms(dofmap, as_csr(A), as_csr(S), as_csr(P), faces)


def assemble_patch(mp: MultiPatch, k: int, delta: Optional[float] = None, f: Optional[LoadFunction] = None,
                   g_N: Optional[FluxFunction] = None, h: Optional[Sequence[float]] = None) -> PatchSystem:
    """Assemble the extended system ``a_e = a + s + p`` of patch `k`.

    Raises:
        ParameterError: If `delta` is not positive.
    """
    delta = _check_delta(default_delta(mp) if delta is None else delta)
    terms = extended_terms(mp, k, delta, h)
    dofmap = terms.dofmap
    load = np.zeros(dofmap.n_ext)
    load[:dofmap.n_own] = assemble_load(mp, k, f, g_N)
    loc = dofmap.local_to_ext

    def reduce(M):
        return as_csr(M[loc, :][:, loc])

    A, S, P = reduce(terms.A), reduce(terms.S), reduce(terms.P)
    K = as_csr(A + S + P)
    logger.debug("patch %d: %d interior, %d boundary dofs", k, dofmap.n_interior, dofmap.n_boundary)
    return PatchSystem(patch=k, dofmap=dofmap, delta=delta, K=K, A=A, S=S, P=P, f=load[loc], faces=terms.faces)


def map_patches(fn, items, workers: int = 1) -> list:
    """Apply `fn` to every item, optionally on a thread pool."""
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def assemble_all(mp: MultiPatch, delta: Optional[float] = None, f: Optional[LoadFunction] = None,
                 g_N: Optional[FluxFunction] = None, workers: int = 1) -> List[PatchSystem]:
    """Assemble every patch system; patches are independent."""
    delta = default_delta(mp) if delta is None else delta
    h = [compute_metrics(p).h for p in mp.patches]
    return map_patches(lambda k: assemble_patch(mp, k, delta, f, g_N, h), range(mp.numpatches), workers)


# --- the global coupled system --------------------------------------------------------------

@dataclass
class GlobalSystem:
    """Globally coupled dG system over the free own dofs of all patches.

    Attributes:
        offsets: start of each patch in the concatenated own numbering.
        free: free global dofs (concatenated own numbering).
        K: matrix of ``a_h`` on the free dofs; D: matrix of the dG norm.
        f: load on the free dofs.
        restrictions: per patch, local (extended, free) to global free map.
    """
    mp: MultiPatch
    offsets: np.ndarray
    free: np.ndarray
    K: scipy.sparse.csr_matrix
    D: scipy.sparse.csr_matrix
    f: np.ndarray
    restrictions: List[scipy.sparse.csr_matrix]

    def expand(self, u_free: np.ndarray) -> List[np.ndarray]:
        """Per-patch own coefficient arrays (zero on Dirichlet dofs)."""
        full = np.zeros(self.offsets[-1])
        full[self.free] = u_free
        return [full[a:b] for a, b in zip(self.offsets[:-1], self.offsets[1:])]

    def restrict(self, u_patches: Sequence[np.ndarray]) -> np.ndarray:
        return np.concatenate(u_patches)[self.free]

    def solve(self) -> List[np.ndarray]:
        """Direct sparse solve of the coupled system."""
        return self.expand(SpdFactorization(self.K).solve(self.f))


def patch_restriction(dofmap: ExtendedDofMap, offsets: np.ndarray, global_index: np.ndarray, n: int) -> scipy.sparse.csr_matrix:
    """0/1 matrix mapping the `n` global free dofs to the local dofs of a patch."""
    ext = dofmap.local_to_ext
    cols = global_index[offsets[dofmap.owner_patch[ext]] + dofmap.owner_dof[ext]]
    return scipy.sparse.csr_matrix((np.ones(ext.size), (np.arange(ext.size), cols)), shape=(ext.size, n))


def assemble_global(mp: MultiPatch, delta: Optional[float] = None, f: Optional[LoadFunction] = None,
                    g_N: Optional[FluxFunction] = None, systems: Optional[List[PatchSystem]] = None) -> GlobalSystem:
    """Sum the extended patch systems into the coupled system ``a_h = sum_k a_e^(k)``."""
    if systems is None:
        systems = assemble_all(mp, delta, f, g_N)
    sizes = [p.space.size for p in mp.patches]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    fixed = np.concatenate([mp.dirichlet_dofs(k) + offsets[k] for k in range(mp.numpatches)])
    free_mask = np.ones(offsets[-1], dtype=bool)
    free_mask[fixed.astype(int)] = False
    free = np.where(free_mask)[0]
    global_index = -np.ones(offsets[-1], dtype=int)
    global_index[free] = np.arange(free.size)
    n = free.size
    K = scipy.sparse.csr_matrix((n, n))
    D = scipy.sparse.csr_matrix((n, n))
    load = np.zeros(n)
    restrictions = []
    for sysk in systems:
        R = patch_restriction(sysk.dofmap, offsets, global_index, n)
        restrictions.append(R)
        K = K + R.T @ sysk.K @ R
        D = D + R.T @ sysk.dg_matrix() @ R
        load += R.T @ sysk.f
    return GlobalSystem(mp=mp, offsets=offsets, free=free, K=as_csr(K), D=as_csr(D), f=load, restrictions=restrictions)


def extended_vector(dofmap: ExtendedDofMap, u_patches: Sequence[np.ndarray]) -> np.ndarray:
    """Extended coefficient vector of a patch built from per-patch own coefficients."""
    return np.array([u_patches[l][d] for l, d in zip(dofmap.owner_patch, dofmap.owner_dof)], dtype=float)
