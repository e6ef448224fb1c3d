"""Exception types shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 2, DataError
(and every file-format subclass) -> 3.
"""


class PexlabError(Exception):
    """Base class for all package errors."""


class ShapeError(PexlabError):
    """Array dimensions do not match the declared network or batch layout."""


class NumericsError(PexlabError):
    """A NaN/Inf showed up where finite values are required."""


class ConfigError(PexlabError):
    """Invalid or contradictory run configuration."""


class DataError(PexlabError):
    """Dataset or checkpoint content is unusable (wrong env, missing nets...)."""


class BadMagicError(DataError):
    """File does not start with the expected magic bytes."""


class VersionError(DataError):
    """File format version is not supported."""


class TruncatedFileError(DataError):
    """File ended before the declared payload was complete."""


class ChecksumError(DataError):
    """Payload checksum does not match the stored CRC32."""
