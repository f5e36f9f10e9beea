"""Exception types shared across the pipeline.

The CLI maps every subclass of :class:`ShadowsegError` to exit status 1 and
``OSError`` to exit status 2.
"""


class ShadowsegError(Exception):
    """Base class for contract and configuration failures."""


class FormatError(ShadowsegError, ValueError):
    """A file does not follow the expected on-disk layout."""


class DimensionError(ShadowsegError, ValueError):
    """Array shapes are incompatible with an operation."""


class ContractError(ShadowsegError, ValueError):
    """A documented precondition was violated."""


class ConfigError(ShadowsegError, ValueError):
    """A configuration value is missing, unknown or out of range."""


class CheckpointError(ShadowsegError, ValueError):
    """A model checkpoint is corrupt or inconsistent."""
