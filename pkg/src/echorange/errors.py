"""Exception hierarchy shared by all echorange modules."""


class EchoRangeError(Exception):
    """Base class for every error raised by echorange."""


class ShapeError(EchoRangeError, ValueError):
    """Array shapes, channel counts or sample rates do not agree."""


class DomainError(EchoRangeError, ValueError):
    """An argument lies outside the domain where an operation is defined."""


class ConfigError(EchoRangeError, ValueError):
    """A configuration document is inconsistent or incomplete."""


class NoDataError(EchoRangeError, ValueError):
    """A statistic was requested over an empty population."""


class StateError(EchoRangeError, RuntimeError):
    """An operation was called in the wrong order (e.g. backward before forward)."""


class IncompatibleCheckpointError(EchoRangeError):
    """A checkpoint was written for a different model configuration."""


class TrainingAborted(EchoRangeError, RuntimeError):
    """Optimization hit a non-finite gradient or loss."""


class WavFormatError(EchoRangeError):
    """The file is not a well-formed RIFF/WAVE container."""


class UnsupportedEncodingError(WavFormatError):
    """The WAVE file uses an encoding other than 16/24-bit PCM or 32-bit float."""


class CorruptFileError(WavFormatError):
    """The data chunk is shorter than its header claims."""


class ValidationError(EchoRangeError, ValueError):
    """Input content (not shape) is unusable, e.g. a silent source signal."""
