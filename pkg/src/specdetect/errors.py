"""Exception types raised across the package."""


class SpecdetectError(Exception):
    """Base class for all package errors."""


class DecodeError(SpecdetectError):
    """An image file exists but cannot be decoded."""


class UnsupportedFormat(SpecdetectError):
    """An image file is in a format outside the supported codec set."""


class ParseError(SpecdetectError):
    """A manifest line is malformed.

    Carries the 1-based line number of the offending record.
    """

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class EmptyManifest(SpecdetectError):
    """A manifest contains no entries."""


class DimensionError(SpecdetectError):
    """Image geometry is incompatible with the requested operation."""


class BundleLoadError(SpecdetectError):
    """A model bundle directory is missing, incomplete, or unreadable."""


class LayerOutOfRange(SpecdetectError):
    """A requested transformer layer index exceeds the backend's depth."""


class ShapeMismatch(SpecdetectError):
    """An input tensor does not match the backend's expected geometry."""


class ZeroVector(SpecdetectError):
    """Cosine similarity was requested for an all-zero embedding."""


class DimMismatch(SpecdetectError):
    """Two embeddings of different dimension were compared."""


class EmptyClass(SpecdetectError):
    """AUC was requested with no real or no fake scores."""


class ConfigError(SpecdetectError):
    """A run configuration value is invalid or inconsistent."""
