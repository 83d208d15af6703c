"""Exceptions raised by ecgnet."""


class EcgnetError(Exception):
    """Base class for all ecgnet errors."""


class RecordFormatError(EcgnetError, ValueError):
    """A record, manifest, segment store or run manifest could not be parsed."""


class ZeroVarianceError(EcgnetError, ValueError):
    """Normalization statistics have zero standard deviation."""


class AlreadyNormalizedError(EcgnetError, ValueError):
    """A segment was normalized twice."""


class ShapeMismatchError(EcgnetError, ValueError):
    """Tensor shapes disagree with a layer or model."""


class ConfigError(EcgnetError, ValueError):
    """Invalid configuration text or configuration values."""


class CheckpointError(EcgnetError, ValueError):
    """A checkpoint file could not be read."""


class ChecksumError(CheckpointError):
    """The stored CRC-32 does not match the checkpoint content."""


class VersionMismatchError(CheckpointError):
    pass


class TruncatedCheckpointError(ChecksumError):
    """The checkpoint ends before its declared content, so its checksum fails too."""


class NonFiniteError(EcgnetError, RuntimeError):
    """NaN or infinity met in a loss, a gradient or a finite difference."""
