"""Exception types raised across the codec."""


class PcldError(Exception):
    """Base class for all codec errors."""


class PGMError(PcldError, ValueError):
    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DegenerateFitError(PcldError, ValueError):
    pass


class ConfigError(PcldError, ValueError):
    pass


class DecodeError(PcldError):
    """Raised for malformed, truncated or otherwise corrupt compressed data."""


class NotWarmedUpError(PcldError, RuntimeError):
    pass


class DegenerateCurvatureError(PcldError, ZeroDivisionError):
    pass
