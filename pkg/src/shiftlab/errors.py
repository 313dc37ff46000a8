"""Exception types shared across the package.

Plain ``ValueError`` is raised for structural problems (shape mismatches,
out-of-range arguments, empty inputs); the classes below name the failure
modes callers may want to handle separately.
"""


class SingularMatrixError(ValueError):
    """Inversion failed: the matrix is singular and no ridge was applied."""


class DegenerateInputError(ValueError):
    """Input is structurally valid but numerically unusable (zero norm, all-zero weights)."""


class InsufficientDataError(ValueError):
    """A class required by the operation is missing or has too few members."""


class IdxFormatError(ValueError):
    """Malformed IDX byte stream.  ``offset`` is the byte position where parsing failed."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class ConfigError(ValueError):
    """Invalid run configuration: unknown keys, missing fields, or bad values."""
