"""Exception hierarchy shared by every bivgs module."""


class BivgsError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(BivgsError, ValueError):
    pass


class ContractError(BivgsError, ValueError):
    """A precondition of an operation was violated."""


class ConfigError(BivgsError, ValueError):
    pass


class TooShortError(BivgsError, ValueError):
    """Waveform shorter than a single analysis frame."""


class EmptyQueueError(BivgsError, LookupError):
    pass


class FormatError(BivgsError, ValueError):
    """Malformed on-disk artifact (dataset, checkpoint, raw audio)."""


class VersionError(FormatError):
    pass


class NumericError(BivgsError, ArithmeticError):
    """A non-finite value appeared during training."""
