"""Exception types shared across the toolkit.

Errors that stem from user-supplied data (files, configs, CLI flags) derive
from ``InputError`` so the CLI can map them to its input-error exit code.
"""


class ToolkitError(Exception):
    """Base class for all toolkit errors."""


class InputError(ToolkitError):
    """Bad user-supplied data: files, directories, configuration values."""


class FrameMismatchError(ToolkitError):
    """Two boxes (or a box and a mapping) live in different coordinate frames."""


class OutOfBoundsError(InputError):
    """A box lies outside the image it is supposed to annotate."""


class ShapeError(InputError):
    """Tensor dimensions disagree with the head layout they are paired with."""


class DecodeError(ToolkitError):
    """Raw head activations cannot be decoded (non-finite values)."""


class EncodeError(ToolkitError):
    """A detection cannot be mapped back to raw activations (logit undefined)."""


class ConfigError(InputError):
    """Inconsistent configuration (phase/head mismatch, bad plant, bad counts)."""


class InsufficientDataError(InputError):
    """Fewer data points than the requested number of clusters."""


class SamplingError(InputError):
    """A class has too few entries for the requested balanced sample."""


class VocParseError(InputError):
    """Annotation XML is not well formed."""

    def __init__(self, message: str, byte_offset: int | None = None):
        super().__init__(message)
        self.byte_offset = byte_offset


class VocSchemaError(InputError):
    """Annotation XML is well formed but missing required elements."""


class VocGeometryError(InputError):
    """An annotated box has non-positive extent or lies outside the image."""


class TensorFileError(InputError):
    """Base class for tensor interchange file problems."""


class TensorFileMagicError(TensorFileError):
    """File does not start with the expected magic bytes."""


class TensorFileVersionError(TensorFileError):
    """Unsupported format version."""


class TensorFileEndiannessError(TensorFileError):
    """Unsupported endianness marker."""


class TensorFileLengthError(TensorFileError):
    """Declared dimensions do not match the number of bytes present."""


class TensorFileCrcError(TensorFileError):
    """Payload checksum mismatch."""
