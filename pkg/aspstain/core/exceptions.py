"""
Custom exceptions
"""


class AspStainError(Exception):
    """Base exception for aspstain"""
    exit_code = 1


class ConfigurationError(AspStainError, ValueError):
    """Raised when a configuration is invalid or inconsistent"""
    exit_code = 2


class DataError(AspStainError):
    """Raised when a dataset is empty or a sample cannot be read"""
    exit_code = 3


class NumericAbortError(AspStainError):
    """Raised when training produces a non-finite loss"""
    exit_code = 4

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class CheckpointError(AspStainError):
    """Raised when a checkpoint cannot be read or has the wrong version"""
    exit_code = 2


class InvalidEmbeddingError(AspStainError, ValueError):
    """Raised when an embedding has zero norm"""
    pass


class AlignmentError(AspStainError, ValueError):
    """Raised when embedding stacks do not share layers and locations"""
    pass


class DomainError(AspStainError, ValueError):
    """Raised when a function argument is outside its domain"""
    pass


class DegenerateWeightsError(AspStainError, ValueError):
    """Raised when every adaptive weight of a layer is zero"""
    pass


class ShapeError(AspStainError, ValueError):
    """Raised when tensor or image shapes are incompatible"""
    pass


class RangeError(AspStainError, IndexError):
    """Raised when a layer id or location index is out of range"""
    pass


class CapacityError(AspStainError, ValueError):
    """Raised when more items are requested than are available"""
    pass


class EmptyInputError(AspStainError, ValueError):
    """Raised when an operation receives no input values"""
    pass


class NumericError(AspStainError, ValueError):
    """Raised when logits contain NaN"""
    pass
