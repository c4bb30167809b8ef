"""Exception types shared across the package."""


class NumericalError(RuntimeError):
    """A numerical routine failed to converge or produced non-finite values."""


class ConfigError(ValueError):
    """A configuration file or object is invalid."""


class FormatError(OSError):
    """A tensor file does not follow the RLRT layout."""


class MagicMismatchError(FormatError):
    pass


class VersionMismatchError(FormatError):
    pass


class DTypeMismatchError(FormatError):
    pass


class TruncatedPayloadError(FormatError):
    pass


class FrameReadError(OSError):
    """A PNG frame sequence could not be read."""
