"""Exception hierarchy shared across the package."""


class WavesceneError(Exception):
    """Base class for all errors raised by this package."""


class LevelTooDeepError(WavesceneError, ValueError):
    """Requested decomposition depth would produce an empty sub-band."""


class InvalidStopLevelError(WavesceneError, ValueError):
    """Reconstruction stop level outside the populated range."""


class BlockSizeError(WavesceneError, ValueError):
    """Codeblock size below the allowed minimum."""


class CodestreamError(WavesceneError):
    """Malformed codestream.  ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class TruncatedStreamError(CodestreamError):
    """Codestream ended before the expected number of bytes."""


class DataError(WavesceneError):
    """Unusable input data (missing files, empty classes, bad images)."""


class ConfigError(WavesceneError):
    """Invalid experiment or model configuration."""
