from typing import Optional

__all__ = [
        "BlocsException",
        # Building things
        "DimensionError",
        "GeometryError",
        "CoverageError",
        "DegenerateInputError",
        # Running things
        "DivergenceError",
        # Outer surfaces
        "ConfigError",
        "ImageFormatError",
]

class BlocsException(Exception):
    pass

# Building things

class DimensionError(BlocsException):
    """
    A sensing operator was requested with dimensions that make no sense, e. g.
    more measurements than pixels per block or no measurements at all.
    """
    pass

class GeometryError(BlocsException):
    """
    Shapes don't fit together: the image doesn't tile into blocks, a block list
    has the wrong length or two arrays that should have the same shape don't.
    """
    pass

class CoverageError(GeometryError):
    """
    At least one pixel is not covered by any patch, so the patch aggregation
    can't produce a value for it.
    """
    pass

class DegenerateInputError(BlocsException):
    """
    The input is technically well-formed but the operation is undefined for it,
    like a sensing matrix with a zero column or a grid smaller than a patch.
    """
    pass

# Running things

class DivergenceError(BlocsException):
    """
    A solver produced a non-finite iterate.
    """

    def __init__(self, iteration: int, message: Optional[str] = None) -> None:
        if message is None:
            message = f"non-finite iterate at iteration {iteration}"
        super().__init__(message)
        self.iteration = iteration

# Outer surfaces

class ConfigError(BlocsException):
    """
    The config file or command line contains an invalid or missing value.
    """
    pass

class ImageFormatError(BlocsException):
    """
    A PGM, PNG, raw video or operator file could not be parsed.
    """

    def __init__(self, path: str, reason: str) -> None:
        super().__init__(f"{path}: {reason}")
        self.path = path
        self.reason = reason
