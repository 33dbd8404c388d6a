"""Exception hierarchy shared across the package.

CLI exit codes: usage errors -> 1, DataError family -> 2, NumericError -> 3.
"""


class DialactError(Exception):
    """Base class for all package errors."""


class ShapeError(DialactError):
    """Operand shapes are inconsistent for the requested operation."""


class NumericError(DialactError):
    """A value that must be finite is NaN or infinite."""


class DataError(DialactError):
    """Invalid input data (files, corpora, configs)."""


class ParseError(DataError):
    """Malformed file content; message carries the line number."""


class TaxonomyError(DataError):
    """Unknown or inconsistent dialogue-act tag."""


class SizeError(DataError):
    """Dataset too small for the requested partition."""


class RankError(DataError):
    """Requested more structure than the data supports (PCA rank, zero variance)."""


class ConfigError(DataError):
    """Invalid or inconsistent configuration."""


class CheckpointError(DataError):
    """Base for checkpoint container problems."""


class HashMismatchError(CheckpointError):
    """Stored content hash does not match the payload."""


class VersionError(CheckpointError):
    """Unsupported checkpoint format version."""


class TaxonomyMismatchError(CheckpointError):
    """Checkpoint was written under a different label taxonomy."""
