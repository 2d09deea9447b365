"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: ValidationError -> 2,
DataFormatError -> 3, NumericalError -> 4.
"""


class RepdiffError(Exception):
    """Base class for all package errors."""


class ValidationError(RepdiffError, ValueError):
    """Bad argument, configuration, or precondition violation."""


class DimensionMismatchError(ValidationError):
    """Vector/tensor dimensions do not agree."""


class DataFormatError(RepdiffError):
    """A file on disk does not match its declared format."""

    code = "format"


class BadMagicError(DataFormatError):
    code = "bad_magic"


class TruncatedFileError(DataFormatError):
    code = "truncated"


class TrailerMismatchError(DataFormatError):
    """Trailer metadata disagrees with the binary header."""

    code = "trailer_mismatch"


class CorruptCheckpointError(DataFormatError):
    code = "corrupt_checkpoint"


class VersionMismatchError(DataFormatError):
    code = "version_mismatch"


class NumericalError(RepdiffError):
    """Non-finite values where finite ones are required."""


class BlankImageError(RepdiffError):
    """Factor probe found no foreground to measure."""
