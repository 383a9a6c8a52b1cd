__version__ = '0.1.0'

from .bspline import KnotVector, TensorSplineSpace, make_knots
from .geometry import Interface, MultiPatch, Patch, Side
from .assembly import GlobalSystem, PatchSystem, assemble_all, assemble_global, assemble_patch
from .schur import PatchSchur
from .ieti import IetiDP, PcgResult, build_ieti, pcg_solve
from .config import RunConfig, load_config
from .experiments import ExperimentRunner
from .exceptions import (
    DgIetiError, DomainError, DimensionError, GeometryError, TopologyError, ParameterError,
    NotPositiveDefiniteError, FactorizationError, ConfigurationError, OracleSizeError, ExperimentError,
)

__all__ = [
    'KnotVector', 'TensorSplineSpace', 'make_knots', 'Interface', 'MultiPatch', 'Patch', 'Side',
    'GlobalSystem', 'PatchSystem', 'assemble_all', 'assemble_global', 'assemble_patch', 'PatchSchur',
    'IetiDP', 'PcgResult', 'build_ieti', 'pcg_solve', 'RunConfig', 'load_config', 'ExperimentRunner',
    'DgIetiError', 'DomainError', 'DimensionError', 'GeometryError', 'TopologyError', 'ParameterError',
    'NotPositiveDefiniteError', 'FactorizationError', 'ConfigurationError', 'OracleSizeError', 'ExperimentError',
]
