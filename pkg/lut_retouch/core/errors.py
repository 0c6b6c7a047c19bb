# lut_retouch/core/errors.py

"""
Exception hierarchy for lut-retouch.

Every error raised on purpose by the library derives from `LutRetouchError`,
so the CLI can translate failures into its stable exit codes without
catching unrelated exceptions.
"""


class LutRetouchError(Exception):
    """Base class for all lut-retouch errors."""


# --- Images ---
class ImageError(LutRetouchError):
    """Raised when an image cannot be decoded or encoded."""


class UnsupportedFormat(ImageError):
    """The file is not 8-bit PNG or binary PPM (P6, maxval 255)."""


class CorruptFile(ImageError):
    """The file claims a supported format but its bytes are malformed."""


class IoFailure(LutRetouchError, OSError):
    """Reading or writing a file failed at the operating-system level."""


class InvalidBins(LutRetouchError, ValueError):
    """A histogram bin count does not divide 256."""


class TooSmall(LutRetouchError, ValueError):
    """An image is smaller than an operation's minimum side."""


# --- Shapes and preconditions ---
class DimensionMismatch(LutRetouchError, ValueError):
    """Two operands have incompatible shapes."""


class PreconditionError(LutRetouchError, ValueError):
    """An argument violates a documented precondition."""


class ConfigError(LutRetouchError, ValueError):
    """A configuration value or document is invalid."""


# --- Datasets ---
class DatasetError(LutRetouchError):
    """A dataset directory is missing or cannot be paired."""


class EmptyDataset(DatasetError):
    """A dataset holds no usable image pairs."""


# --- Conversion ---
class UnsupportedGroupLength(LutRetouchError):
    """Weight LUTs are 2D tables, so split-FC groups must have length 2."""


class UnsupportedVariant(LutRetouchError):
    """The model variant has no lookup-table form (e.g. 3x3 kernels)."""


# --- Artifacts ---
class CheckpointError(LutRetouchError):
    """A model checkpoint could not be parsed."""


class BundleError(LutRetouchError):
    """A LUT bundle file could not be parsed."""


class BadMagic(BundleError):
    """The bundle does not start with the expected magic bytes."""


class VersionMismatch(BundleError):
    """The bundle was written by an unsupported format version."""


class ChecksumMismatch(BundleError):
    """The bundle payload is truncated or its CRC32 does not match."""
