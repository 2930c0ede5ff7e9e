"""Exception hierarchy shared across the package."""


class DiagMetaError(Exception):
    """Base class for all errors raised by diagmeta."""


class DataError(DiagMetaError, ValueError):
    """Invalid or malformed study data."""


class ParseError(DataError):
    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class DatasetTooSmallError(DataError):
    pass


class ValidationError(DataError):
    pass


class NonFiniteTransformError(DataError):
    """A zero cell produced an infinite link transform."""


class DomainError(DiagMetaError, ValueError):
    """Argument outside the domain of a link or distribution function."""


class QuadratureError(DiagMetaError, ValueError):
    pass


class DecompositionError(DiagMetaError, ValueError):
    """Covariance matrix is not positive definite."""


class OptimizationError(DiagMetaError, RuntimeError):
    pass


class RegionError(DiagMetaError, ValueError):
    pass


class GenerationError(DiagMetaError, RuntimeError):
    """Simulated study kept producing an empty margin."""


class ConfigError(DiagMetaError, ValueError):
    pass
