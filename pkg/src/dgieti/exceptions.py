class DgIetiError(Exception):
    """Base class for all errors raised by dgieti."""
    pass

class DomainError(DgIetiError):
    """Exception raised when an argument lies outside its mathematical domain."""
    pass

class DimensionError(DgIetiError):
    """Exception raised for coefficient or vector size mismatches."""
    pass

class GeometryError(DgIetiError):
    """Exception raised for degenerate or orientation-reversing geometry maps."""
    pass

class TopologyError(DgIetiError):
    """Exception raised for invalid multipatch connectivity."""
    pass

class ParameterError(DgIetiError):
    """Exception raised for invalid solver parameters."""
    pass

class NotPositiveDefiniteError(DgIetiError):
    """Exception raised when a factorization meets a non-positive pivot."""
    pass

class FactorizationError(DgIetiError):
    """Exception raised when a local block cannot be factorized."""
    pass

class ConfigurationError(DgIetiError):
    """Exception raised for invalid run configurations or unconstrained subproblems."""
    pass

class OracleSizeError(DgIetiError):
    """Exception raised when a dense oracle is asked for a too large problem."""
    pass

class ExperimentError(DgIetiError):
    """Exception raised when an experiment fails; keeps the rows computed so far."""

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial if partial is not None else []
