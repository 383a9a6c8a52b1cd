"""Patch geometry maps, multipatch topology and mesh metrics.

A patch maps the unit square onto its physical domain through a fixed,
coarse B-spline geometry; the solution space on the patch is an independent
tensor spline space that can be refined without touching the geometry.
Interfaces join complete sides of two patches; the two sides may carry
different (non-matching) knot vectors.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.spatial.distance

from .bspline import KnotVector, TensorSplineSpace, make_knots, tensor_eval, uniform_refine
from .exceptions import DimensionError, DomainError, GeometryError, TopologyError

logger = logging.getLogger(__name__)

SIDES = ("west", "east", "south", "north")
ORIENTATIONS = ("same", "reversed")

# side -> (fixed parameter direction, fixed value); the side parameter t runs
# along the other direction
_SIDE_AXES = {
    "west": (0, 0.0),
    "east": (0, 1.0),
    "south": (1, 0.0),
    "north": (1, 1.0),
}


@dataclass(frozen=True)
class Side:
    """One of the four sides of a patch."""
    patch: int
    side: str

    def __post_init__(self):
        if self.side not in SIDES:
            raise TopologyError(f"Unknown side '{self.side}', expected one of {SIDES}")

    @property
    def normal_axis(self) -> int:
        return _SIDE_AXES[self.side][0]

    @property
    def tangent_axis(self) -> int:
        return 1 - _SIDE_AXES[self.side][0]

    @property
    def value(self) -> float:
        return _SIDE_AXES[self.side][1]

    def parameters(self, t) -> Tuple[np.ndarray, np.ndarray]:
        """Parameter coordinates ``(x1, x2)`` of the side points with side parameter `t`."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        fixed = np.full_like(t, self.value)
        return (fixed, t) if self.normal_axis == 0 else (t, fixed)


@dataclass(frozen=True)
class Interface:
    """A common interface of two patches.

    Args:
        first (Side): side of the first patch.
        second (Side): side of the second patch.
        orientation (str): ``"same"`` if both sides are parametrized in the
            same direction along the common curve, else ``"reversed"``.
    """
    first: Side
    second: Side
    orientation: str = "same"

    def __post_init__(self):
        if self.orientation not in ORIENTATIONS:
            raise TopologyError(f"Unknown orientation '{self.orientation}'")
        if self.first.patch == self.second.patch:
            raise TopologyError(f"Interface joins patch {self.first.patch} with itself")

    @property
    def reversed(self) -> bool:
        return self.orientation == "reversed"

    def map_parameter(self, t):
        """Map a side parameter of one side to the matching parameter of the other."""
        t = np.asarray(t, dtype=float)
        return 1.0 - t if self.reversed else t


def side_dofs(space: TensorSplineSpace, side: str) -> np.ndarray:
    """Flat indices of the boundary-layer basis functions of `side`, ordered along the side."""
    M1, M2 = space.shape
    if side == "west":
        return space.flat_index(0, np.arange(M2))
    if side == "east":
        return space.flat_index(M1 - 1, np.arange(M2))
    if side == "south":
        return space.flat_index(np.arange(M1), 0)
    if side == "north":
        return space.flat_index(np.arange(M1), M2 - 1)
    raise TopologyError(f"Unknown side '{side}'")


def corner_dofs(space: TensorSplineSpace) -> np.ndarray:
    M1, M2 = space.shape
    return np.array([
        space.flat_index(0, 0), space.flat_index(M1 - 1, 0),
        space.flat_index(0, M2 - 1), space.flat_index(M1 - 1, M2 - 1),
    ])


def solution_space(geometry: TensorSplineSpace, degree: Optional[int] = None, levels: int = 0) -> TensorSplineSpace:
    """Solution space on the parameter mesh of `geometry`.

    With the geometry degree the geometry knots are refined directly;
    otherwise a degree-`degree` space with simple knots at the geometry
    breakpoints is refined.
    """
    kvs = []
    for kv in geometry.kvs:
        if degree is None or degree == kv.degree:
            base = kv
        else:
            base = KnotVector(np.concatenate([np.zeros(degree), kv.mesh, np.ones(degree)]), degree)
        kvs.append(uniform_refine(base, levels))
    return TensorSplineSpace(kvs)


class Patch:
    """A B-spline patch ``G: [0,1]^2 -> R^2`` with its solution space.

    Args:
        geometry (TensorSplineSpace): coarse geometry space.
        control_points: ``(M1*M2, 2)`` control points, row-major.
        space (TensorSplineSpace, optional): solution space; defaults to the
            geometry space.
        alpha (float): diffusion coefficient on the patch.

    Raises:
        DimensionError: If the control net does not match the geometry space.
        DomainError: If `alpha` is not positive.
        GeometryError: If the Jacobian determinant is not positive.
    """

    def __init__(self, geometry: TensorSplineSpace, control_points, space: Optional[TensorSplineSpace] = None, alpha: float = 1.0):
        cps = np.asarray(control_points, dtype=float)
        if cps.shape != (geometry.size, 2):
            raise DimensionError(f"Expected control points of shape {(geometry.size, 2)}, got {cps.shape}")
        if not alpha > 0:
            raise DomainError(f"Diffusion coefficient must be positive, got {alpha}")
        cps.setflags(write=False)
        self.geometry = geometry
        self.control_points = cps
        self.space = space if space is not None else geometry
        self.alpha = float(alpha)
        self._check_orientation()

    def __repr__(self):
        return f"Patch(space={self.space.shape}, alpha={self.alpha})"

    def _check_orientation(self):
        pts = []
        for kv in self.geometry.kvs:
            mesh = kv.mesh
            g = np.polynomial.legendre.leggauss(kv.degree + 1)[0]
            pts.append(np.concatenate([0.5 * (a + b) + 0.5 * (b - a) * g for a, b in zip(mesh[:-1], mesh[1:])] + [mesh]))
        _, jac = self.map_grid(pts[0], pts[1])
        det = np.linalg.det(jac)
        if np.any(det <= 0):
            raise GeometryError(f"Geometry map is degenerate or reversed (min det J = {det.min():.3e})")

    def with_space(self, space: TensorSplineSpace) -> "Patch":
        return Patch(self.geometry, self.control_points, space, self.alpha)

    def refined(self, levels: int) -> "Patch":
        """The same patch with its solution space uniformly refined."""
        return self.with_space(self.space.refine(levels))

    def map_grid(self, x1, x2) -> Tuple[np.ndarray, np.ndarray]:
        """Physical points and Jacobians on the parameter grid ``x1 x x2``.

        Returns:
            points ``(n1*n2, 2)`` and Jacobians ``(n1*n2, 2, 2)`` with
            ``J[q, a, b] = d G_a / d x_b``.
        """
        B, D1, D2 = self.geometry.grid_collocation(x1, x2, derivative=True)
        return self._combine(B, D1, D2)

    def map_points(self, x1, x2) -> Tuple[np.ndarray, np.ndarray]:
        """Like :meth:`map_grid` for scattered parameter points."""
        B, D1, D2 = self.geometry.point_collocation(x1, x2, derivative=True)
        return self._combine(B, D1, D2)

    def _combine(self, B, D1, D2):
        points = B @ self.control_points
        jac = np.stack([D1 @ self.control_points, D2 @ self.control_points], axis=-1)
        return points, jac


def eval_geometry(patch: Patch, point) -> Tuple[np.ndarray, np.ndarray]:
    """Point ``G(x)`` and Jacobian ``dG/dx`` at one parameter point.

    Raises:
        GeometryError: If the Jacobian determinant is not positive there.
    """
    value, jac = tensor_eval(patch.geometry, patch.control_points, point)
    if np.linalg.det(jac) <= 0:
        raise GeometryError(f"Degenerate Jacobian at parameter point {tuple(point)}")
    return value, jac


class MultiPatch:
    """Patches joined along full sides, with boundary tags.

    Args:
        patches (List[Patch]): the patches.
        interfaces (List[Interface]): declared interfaces.
        dirichlet_sides (List[Side]): sides with homogeneous Dirichlet data.
        neumann_sides (List[Side], optional): sides with Neumann data; by
            default every untagged non-interface side.

    Raises:
        TopologyError: If a side is used twice, a boundary side is untagged,
            or there is no Dirichlet side.
    """

    def __init__(self, patches: Sequence[Patch], interfaces: Sequence[Interface], dirichlet_sides: Sequence[Side], neumann_sides: Optional[Sequence[Side]] = None):
        self.patches = list(patches)
        self.interfaces = list(interfaces)
        self.dirichlet_sides = list(dirichlet_sides)
        used = set()
        for iface in self.interfaces:
            for s in (iface.first, iface.second):
                self._check_side(s)
                if s in used:
                    raise TopologyError(f"Side {s} appears in more than one interface")
                used.add(s)
        for s in self.dirichlet_sides:
            self._check_side(s)
            if s in used:
                raise TopologyError(f"Dirichlet side {s} is also an interface side")
        if neumann_sides is None:
            tagged = used | set(self.dirichlet_sides)
            neumann_sides = [Side(k, s) for k in range(len(self.patches)) for s in SIDES if Side(k, s) not in tagged]
        self.neumann_sides = list(neumann_sides)
        for s in self.neumann_sides:
            self._check_side(s)
            if s in used or s in self.dirichlet_sides:
                raise TopologyError(f"Neumann side {s} is tagged twice")
        tagged = used | set(self.dirichlet_sides) | set(self.neumann_sides)
        missing = [Side(k, s) for k in range(len(self.patches)) for s in SIDES if Side(k, s) not in tagged]
        if missing:
            raise TopologyError(f"Untagged boundary sides: {missing}")
        if not self.dirichlet_sides:
            raise TopologyError("The Dirichlet boundary must not be empty")

    def _check_side(self, s: Side):
        if not 0 <= s.patch < len(self.patches):
            raise TopologyError(f"Side {s} refers to a missing patch")

    def __len__(self):
        return len(self.patches)

    @property
    def numpatches(self) -> int:
        return len(self.patches)

    def patch_interfaces(self, k: int) -> List[Tuple[int, Side, Side]]:
        """Interfaces of patch `k` as ``(interface index, own side, neighbor side)``."""
        out = []
        for i, iface in enumerate(self.interfaces):
            if iface.first.patch == k:
                out.append((i, iface.first, iface.second))
            elif iface.second.patch == k:
                out.append((i, iface.second, iface.first))
        return out

    def neighbors(self, k: int) -> List[int]:
        return sorted({other.patch for _, _, other in self.patch_interfaces(k)})

    def is_dirichlet(self, side: Side) -> bool:
        return side in self.dirichlet_sides

    def dirichlet_dofs(self, k: int) -> np.ndarray:
        """Own dof indices of patch `k` on its Dirichlet sides."""
        space = self.patches[k].space
        idx = [side_dofs(space, s.side) for s in self.dirichlet_sides if s.patch == k]
        return np.unique(np.concatenate(idx)) if idx else np.zeros(0, dtype=int)

    def refined(self, levels) -> "MultiPatch":
        """Refine the solution spaces; `levels` is a scalar or one entry per patch."""
        if np.isscalar(levels):
            levels = [levels] * self.numpatches
        patches = [p.refined(int(L)) for p, L in zip(self.patches, levels)]
        return MultiPatch(patches, self.interfaces, self.dirichlet_sides, self.neumann_sides)


def verify_topology(mp: MultiPatch, tol: float = 1e-10, samples: int = 11) -> List[str]:
    """Check that every declared interface is geometrically matching.

    Returns:
        List[str]: one message per violated interface; empty if valid.
    """
    violations = []
    t = np.linspace(0.0, 1.0, samples)
    for i, iface in enumerate(mp.interfaces):
        pa = mp.patches[iface.first.patch]
        pb = mp.patches[iface.second.patch]
        xa, _ = pa.map_points(*iface.first.parameters(t))
        xb, _ = pb.map_points(*iface.second.parameters(iface.map_parameter(t)))
        dist = float(np.max(np.linalg.norm(xa - xb, axis=1)))
        H = compute_metrics(pa).H
        if dist > tol * H:
            msg = f"interface {i} ({iface.first} / {iface.second}): max distance {dist:.3e} exceeds {tol * H:.3e}"
            logger.warning(msg)
            violations.append(msg)
    return violations


@dataclass
class FaceDofs:
    """Dof index sets attached to one interface as seen from a patch."""
    interface: int
    own_side: Side
    neighbor_side: Side
    reversed: bool
    own_face: np.ndarray
    neighbor_face: np.ndarray

    @property
    def neighbor(self) -> int:
        return self.neighbor_side.patch


@dataclass
class FaceDofSets:
    """Own dofs of a patch and its face/neighbor-copy index sets."""
    patch: int
    own: np.ndarray
    faces: List[FaceDofs] = field(default_factory=list)

    def by_neighbor(self, l: int) -> List[FaceDofs]:
        return [f for f in self.faces if f.neighbor == l]


def face_dofs(mp: MultiPatch, side: Side) -> FaceDofs:
    """Face index sets of one interface side.

    Raises:
        TopologyError: If `side` is not part of an interface.
    """
    for i, own, other in mp.patch_interfaces(side.patch):
        if own == side:
            iface = mp.interfaces[i]
            return FaceDofs(
                interface=i,
                own_side=own,
                neighbor_side=other,
                reversed=iface.reversed,
                own_face=side_dofs(mp.patches[own.patch].space, own.side),
                neighbor_face=side_dofs(mp.patches[other.patch].space, other.side),
            )
    raise TopologyError(f"Side {side} is not an interface side")


def face_dof_sets(mp: MultiPatch, k: int) -> FaceDofSets:
    """Own dofs of patch `k`, its interface dofs and the neighbor face dofs."""
    if not 0 <= k < mp.numpatches:
        raise TopologyError(f"Patch index {k} out of range")
    faces = [face_dofs(mp, own) for _, own, _ in mp.patch_interfaces(k)]
    return FaceDofSets(patch=k, own=np.arange(mp.patches[k].space.size), faces=faces)


@dataclass
class PatchMetrics:
    """Mesh metrics of one patch.

    Attributes:
        h: largest mapped element diameter.
        H: patch diameter (diameter of the control net).
        side_h: per side, the largest mapped face element length.
        hhat: parameter meshsize.
    """
    h: float
    H: float
    side_h: Dict[str, float]
    hhat: float


def compute_metrics(patch: Patch) -> PatchMetrics:
    mesh1, mesh2 = (kv.mesh for kv in patch.space.kvs)
    pts, _ = patch.map_grid(mesh1, mesh2)
    P = pts.reshape(mesh1.size, mesh2.size, 2)
    corners = [P[:-1, :-1], P[1:, :-1], P[:-1, 1:], P[1:, 1:]]
    h = 0.0
    for a in range(4):
        for b in range(a + 1, 4):
            h = max(h, float(np.max(np.linalg.norm(corners[a] - corners[b], axis=-1))))
    side_h = {
        "west": float(np.max(np.linalg.norm(np.diff(P[0, :], axis=0), axis=-1))),
        "east": float(np.max(np.linalg.norm(np.diff(P[-1, :], axis=0), axis=-1))),
        "south": float(np.max(np.linalg.norm(np.diff(P[:, 0], axis=0), axis=-1))),
        "north": float(np.max(np.linalg.norm(np.diff(P[:, -1], axis=0), axis=-1))),
    }
    H = float(np.max(scipy.spatial.distance.pdist(patch.control_points)))
    return PatchMetrics(h=h, H=H, side_h=side_h, hhat=patch.space.meshsize)


def harmonic_average(h_k: float, h_l: float) -> float:
    """Harmonic average ``2 h_k h_l / (h_k + h_l)`` of two meshsizes.

    Raises:
        DomainError: If a meshsize is not positive.
    """
    if not (h_k > 0 and h_l > 0):
        raise DomainError(f"Meshsizes must be positive, got {h_k} and {h_l}")
    return 2.0 * h_k * h_l / (h_k + h_l)


def max_h_ratio(mp: MultiPatch) -> float:
    """``H/h = max_k H_k / h_k``."""
    return max(m.H / m.h for m in map(compute_metrics, mp.patches))


def mesh_ratio_factor(mp: MultiPatch) -> float:
    """``q_h = max over neighbors (h_l/h_k + (h_l/h_k)^2)``; 0 without interfaces."""
    h = [compute_metrics(p).h for p in mp.patches]
    q = 0.0
    for iface in mp.interfaces:
        k, l = iface.first.patch, iface.second.patch
        for r in (h[l] / h[k], h[k] / h[l]):
            q = max(q, r + r * r)
    return q


# --- built-in geometries -------------------------------------------------------

def quad_patch(corners, degree: int, levels: int = 0, alpha: float = 1.0, spans: int = 1) -> Patch:
    """Bilinear patch with corners ``P00, P10, P01, P11`` and a degree-`degree` solution space."""
    c = np.asarray(corners, dtype=float).reshape(4, 2)
    geometry = TensorSplineSpace([make_knots(1, 1), make_knots(1, 1)])
    # row-major (i1, i2): P00, P01, P10, P11
    cps = np.array([c[0], c[2], c[1], c[3]])
    space = TensorSplineSpace([make_knots(degree, spans), make_knots(degree, spans)]).refine(levels)
    return Patch(geometry, cps, space, alpha)


def box_grid(nx: int, ny: int, degree: int, levels=0, size=(1.0, 1.0), alpha=1.0, dirichlet: Optional[Sequence[Side]] = None) -> MultiPatch:
    """``nx x ny`` grid of axis-parallel box patches on ``[0, sx] x [0, sy]``.

    Patch ``k = j * nx + i`` covers column `i` and row `j`. Without an
    explicit `dirichlet` list every outer side is Dirichlet; otherwise the
    remaining outer sides are Neumann.
    """
    n = nx * ny
    levels = [levels] * n if np.isscalar(levels) else list(levels)
    alpha = [alpha] * n if np.isscalar(alpha) else list(alpha)
    if len(levels) != n or len(alpha) != n:
        raise DimensionError(f"Expected {n} per-patch levels and coefficients")
    sx, sy = size
    patches, interfaces = [], []
    for j in range(ny):
        for i in range(nx):
            k = j * nx + i
            x0, x1 = sx * i / nx, sx * (i + 1) / nx
            y0, y1 = sy * j / ny, sy * (j + 1) / ny
            patches.append(quad_patch([(x0, y0), (x1, y0), (x0, y1), (x1, y1)], degree, levels[k], alpha[k]))
            if i + 1 < nx:
                interfaces.append(Interface(Side(k, "east"), Side(k + 1, "west")))
            if j + 1 < ny:
                interfaces.append(Interface(Side(k, "north"), Side(k + nx, "south")))
    outer = []
    for j in range(ny):
        outer += [Side(j * nx, "west"), Side(j * nx + nx - 1, "east")]
    for i in range(nx):
        outer += [Side(i, "south"), Side((ny - 1) * nx + i, "north")]
    if dirichlet is None:
        return MultiPatch(patches, interfaces, outer)
    dirichlet = list(dirichlet)
    return MultiPatch(patches, interfaces, dirichlet, [s for s in outer if s not in dirichlet])


def split_square(degree: int, levels: int, extra: int = 1, alpha: float = 1.0) -> MultiPatch:
    """Unit square split at ``x = 1/2``; the right patch is refined `extra` more times."""
    return box_grid(2, 1, degree, [levels, levels + extra], alpha=alpha)


def lshape(degree: int, levels=0, alpha: float = 1.0) -> MultiPatch:
    """L-shaped domain ``[0,2]x[0,1] u [0,1]x[1,2]`` split along the diagonal from the origin to the re-entrant corner."""
    levels = [levels] * 2 if np.isscalar(levels) else list(levels)
    lower = quad_patch([(0, 0), (2, 0), (1, 1), (2, 1)], degree, levels[0], alpha)
    upper = quad_patch([(0, 0), (1, 1), (0, 2), (1, 2)], degree, levels[1], alpha)
    iface = Interface(Side(0, "west"), Side(1, "south"))
    dirichlet = [Side(0, "east"), Side(0, "south"), Side(0, "north"),
                 Side(1, "west"), Side(1, "east"), Side(1, "north")]
    return MultiPatch([lower, upper], [iface], dirichlet)


def annulus_pair(degree: int, levels=0, radii=(1.0, 2.0), alpha: float = 1.0) -> MultiPatch:
    """Quarter annulus split at 45 degrees into two patches.

    Direction 1 is radial (linear), direction 2 angular (quadratic); without
    rational weights the arcs are polynomial approximations of circles.
    """
    levels = [levels] * 2 if np.isscalar(levels) else list(levels)
    r0, r1 = radii
    patches = []
    for k, (a, b) in enumerate([(0.0, np.pi / 4), (np.pi / 4, np.pi / 2)]):
        m = 0.5 * (a + b)
        cps = []
        for r in (r0, r1):
            cps += [r * np.array([np.cos(a), np.sin(a)]),
                    r / np.cos(0.5 * (b - a)) * np.array([np.cos(m), np.sin(m)]),
                    r * np.array([np.cos(b), np.sin(b)])]
        geometry = TensorSplineSpace([make_knots(1, 1), make_knots(2, 1)])
        space = TensorSplineSpace([make_knots(degree, 1), make_knots(degree, 1)]).refine(levels[k])
        patches.append(Patch(geometry, np.array(cps), space, alpha))
    iface = Interface(Side(0, "north"), Side(1, "south"))
    dirichlet = [Side(0, "west"), Side(0, "east"), Side(0, "south"),
                 Side(1, "west"), Side(1, "east"), Side(1, "north")]
    return MultiPatch(patches, [iface], dirichlet)
