"""Exceptions raised when reading or writing the on-disk formats."""


class FormatError(ValueError):
    """Base class for malformed dataset / model directories."""


class MissingFileError(FormatError, FileNotFoundError):
    pass


class VersionMismatchError(FormatError):
    pass


class OffsetError(FormatError):
    """Byte offsets disagree with the record sizes (gaps, overlaps, out of order)."""


class TruncatedDataError(FormatError):
    """The binary blob is shorter than the manifest requires."""


class SizeMismatchError(FormatError):
    """The binary blob is longer than the manifest accounts for."""


class UnknownDtypeError(FormatError):
    pass


class DuplicateNameError(FormatError):
    pass


class ConfigError(ValueError):
    """Invalid or missing configuration key."""
