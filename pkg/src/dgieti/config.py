"""Run configuration and geometry documents.

A run is described by one JSON document::

    {
      "geometry": {"generator": {"kind": "grid", "nx": 2, "ny": 2}},
      "discretization": {"degree": 2, "levels": 2, "level_list": [1, 2, 3], "alpha": 1.0},
      "solver": {"tol": 1e-8, "maxit": 500, "scaling": "multiplicity", "oracle": false},
      "experiment": {"kind": "solve", "manufactured": "sinsin", "ratios": [1, 2, 4]},
      "output": "out"
    }

``geometry`` may also be a path to a separate geometry document (relative
to the configuration file) or an explicit patch list.
"""

import logging
import os
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from .bspline import KnotVector, TensorSplineSpace
from .exceptions import ConfigurationError, DgIetiError
from .geometry import (
    SIDES, Interface, MultiPatch, Patch, Side, annulus_pair, box_grid, lshape, solution_space, split_square,
)
from .ieti import SCALINGS
from .manufactured import SOLUTIONS
from .utils import extract_value, read_json

logger = logging.getLogger(__name__)

EXPERIMENTS = ("solve", "kappa-study", "ratio-study", "convergence")
GENERATORS = ("grid", "lshape", "annulus", "split-square")


@dataclass
class RunConfig:
    """Validated settings of one experiment run."""
    geometry: Dict[str, Any]
    degree: int = 2
    levels: Union[int, List[int]] = 0
    level_list: List[int] = field(default_factory=lambda: [1, 2, 3])
    ratios: List[int] = field(default_factory=lambda: [1, 2, 4])
    delta: Optional[float] = None
    alpha: Union[float, List[float]] = 1.0
    tol: float = 1e-8
    maxit: int = 500
    experiment: str = "solve"
    output: str = "out"
    oracle: bool = False
    manufactured: Optional[str] = None
    scaling: str = "multiplicity"
    seed: int = 0
    workers: int = 1

    def validate(self) -> List[str]:
        """Return every problem found; an empty list means the configuration is valid."""
        problems = []
        levels = [self.levels] if np.isscalar(self.levels) else list(self.levels)
        if any(int(L) != L or L < 0 for L in levels + list(self.level_list)):
            problems.append("refinement levels must be nonnegative integers")
        if self.degree < 1:
            problems.append(f"degree must be at least 1, got {self.degree}")
        if self.delta is not None and not self.delta > 0:
            problems.append(f"delta must be positive, got {self.delta}")
        if not 0 < self.tol < 1:
            problems.append(f"tol must lie in (0, 1), got {self.tol}")
        if self.maxit < 1:
            problems.append(f"maxit must be positive, got {self.maxit}")
        if self.experiment not in EXPERIMENTS:
            problems.append(f"unknown experiment '{self.experiment}', expected one of {EXPERIMENTS}")
        if self.scaling not in SCALINGS:
            problems.append(f"unknown scaling '{self.scaling}', expected one of {SCALINGS}")
        if self.manufactured is not None and self.manufactured not in SOLUTIONS:
            problems.append(f"unknown manufactured solution '{self.manufactured}'")
        alphas = [self.alpha] if np.isscalar(self.alpha) else list(self.alpha)
        if any(not a > 0 for a in alphas):
            problems.append("diffusion coefficients must be positive")
        if self.manufactured is not None and len(set(alphas)) > 1:
            problems.append("manufactured solutions need a constant diffusion coefficient")
        for r in self.ratios:
            if r < 1 or int(r) != r or (int(r) & (int(r) - 1)):
                problems.append(f"mesh ratios must be powers of two, got {r}")
        if self.workers < 1:
            problems.append(f"workers must be positive, got {self.workers}")
        if not isinstance(self.geometry, dict):
            problems.append("geometry must be a mapping")
        return problems

    @classmethod
    def from_dict(cls, data: Dict[str, Any], base_dir: str = ".") -> "RunConfig":
        """Build a configuration from a parsed JSON document.

        Raises:
            ConfigurationError: Listing every invalid setting.
        """
        geometry = extract_value(data, "geometry", None)
        if geometry is None:
            raise ConfigurationError("Configuration has no 'geometry' entry")
        if isinstance(geometry, str):
            geometry = read_json(os.path.join(base_dir, geometry))
        defaults = cls(geometry={})
        try:
            config = cls(
                geometry=geometry,
                degree=int(extract_value(data, "discretization.degree", defaults.degree)),
                levels=extract_value(data, "discretization.levels", defaults.levels),
                level_list=list(extract_value(data, "discretization.level_list", defaults.level_list)),
                alpha=extract_value(data, "discretization.alpha", defaults.alpha),
                delta=extract_value(data, "discretization.delta", defaults.delta),
                tol=float(extract_value(data, "solver.tol", defaults.tol)),
                maxit=int(extract_value(data, "solver.maxit", defaults.maxit)),
                scaling=extract_value(data, "solver.scaling", defaults.scaling),
                oracle=bool(extract_value(data, "solver.oracle", defaults.oracle)),
                workers=int(extract_value(data, "solver.workers", defaults.workers)),
                experiment=extract_value(data, "experiment.kind", defaults.experiment),
                manufactured=extract_value(data, "experiment.manufactured", defaults.manufactured),
                ratios=list(extract_value(data, "experiment.ratios", defaults.ratios)),
                seed=int(extract_value(data, "experiment.seed", defaults.seed)),
                output=extract_value(data, "output", defaults.output),
            )
        except (TypeError, ValueError) as e:
            raise ConfigurationError(f"Malformed configuration: {str(e)}") from e
        problems = config.validate()
        if problems:
            raise ConfigurationError("Invalid configuration: " + "; ".join(problems))
        return config

    def replace(self, **changes) -> "RunConfig":
        """Copy with overridden fields, validated again."""
        data = asdict(self)
        data.update({k: v for k, v in changes.items() if v is not None})
        config = RunConfig(**data)
        problems = config.validate()
        if problems:
            raise ConfigurationError("Invalid configuration: " + "; ".join(problems))
        return config

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def load_config(path: str) -> RunConfig:
    """Read and validate a JSON run configuration.

    Raises:
        ConfigurationError: If the file cannot be read or is invalid.
    """
    try:
        data = read_json(path)
    except (OSError, ValueError) as e:
        raise ConfigurationError(f"Failed to read configuration {path}: {str(e)}") from e
    return RunConfig.from_dict(data, os.path.dirname(os.path.abspath(path)))


def _side(entry) -> Side:
    try:
        k, name = entry
    except (TypeError, ValueError):
        raise ConfigurationError(f"Side entries must be [patch, side], got {entry!r}")
    if name not in SIDES:
        raise ConfigurationError(f"Unknown side '{name}'")
    return Side(int(k), name)


def _per_patch(value, n: int, what: str) -> List:
    values = [value] * n if np.isscalar(value) else list(value)
    if len(values) != n:
        raise ConfigurationError(f"Expected {n} per-patch {what}, got {len(values)}")
    return values


def parse_patches(geometry: Dict[str, Any], degree: int, levels, alpha) -> MultiPatch:
    """MultiPatch from an explicit geometry document."""
    entries = geometry["patches"]
    levels = _per_patch(levels, len(entries), "levels")
    alpha = _per_patch(alpha, len(entries), "coefficients")
    patches = []
    for i, entry in enumerate(entries):
        p = entry["degree"]
        p = [p, p] if np.isscalar(p) else p
        kvs = [KnotVector(kv, d) for kv, d in zip(entry["knots"], p)]
        geo = TensorSplineSpace(kvs)
        space = solution_space(geo, degree, int(entry.get("levels", 0)) + int(levels[i]))
        patches.append(Patch(geo, entry["control_points"], space, float(entry.get("alpha", alpha[i]))))
    interfaces = [
        Interface(_side(f["first"]), _side(f["second"]), f.get("orientation", "same"))
        for f in geometry.get("interfaces", [])
    ]
    dirichlet = [_side(s) for s in geometry.get("dirichlet", [])]
    neumann = geometry.get("neumann")
    neumann = None if neumann is None else [_side(s) for s in neumann]
    return MultiPatch(patches, interfaces, dirichlet, neumann)


def build_geometry(geometry: Dict[str, Any], degree: int, levels=0, alpha=1.0) -> MultiPatch:
    """MultiPatch from a geometry document (generator block or explicit patches).

    Raises:
        ConfigurationError: If the document is malformed or describes an invalid domain.
    """
    try:
        if "generator" in geometry:
            gen = dict(geometry["generator"])
            kind = gen.pop("kind", None)
            if kind not in GENERATORS:
                raise ConfigurationError(f"Unknown geometry generator '{kind}', expected one of {GENERATORS}")
            if kind == "grid":
                dirichlet = gen.get("dirichlet")
                return box_grid(
                    int(gen.get("nx", 2)), int(gen.get("ny", 2)), degree, levels,
                    size=tuple(gen.get("size", (1.0, 1.0))), alpha=alpha,
                    dirichlet=None if dirichlet is None else [_side(s) for s in dirichlet],
                )
            if not np.isscalar(alpha):
                raise ConfigurationError(f"Generator '{kind}' takes a scalar coefficient")
            if kind == "lshape":
                return lshape(degree, levels, alpha)
            if kind == "annulus":
                return annulus_pair(degree, levels, tuple(gen.get("radii", (1.0, 2.0))), alpha)
            if not np.isscalar(levels):
                raise ConfigurationError("Generator 'split-square' takes a scalar base level")
            return split_square(degree, int(levels), int(gen.get("extra", 1)), alpha)
        if "patches" in geometry:
            return parse_patches(geometry, degree, levels, alpha)
    except ConfigurationError:
        raise
    except (KeyError, TypeError, ValueError, DgIetiError) as e:
        raise ConfigurationError(f"Invalid geometry: {str(e)}") from e
    raise ConfigurationError("Geometry needs either a 'generator' block or a 'patches' list")


def offset_levels(levels, offset: int) -> Union[int, Sequence[int]]:
    """Add `offset` to a scalar or per-patch refinement level."""
    if np.isscalar(levels):
        return int(levels) + offset
    return [int(L) + offset for L in levels]
