"""Exception hierarchy shared by every subsystem.

The command-line tool turns each class into its own exit code.
"""


class QrlanderError(Exception):
    """Base class for all package errors."""


class ConfigError(QrlanderError, ValueError):
    """A configuration value is out of range or inconsistent."""


class StructureError(QrlanderError, ValueError):
    """Shapes, indices or cached state do not fit together."""


class InputError(QrlanderError, ValueError):
    """Caller-supplied data is invalid (e.g. non-finite observations)."""


class UsageError(QrlanderError, RuntimeError):
    """An operation was called in the wrong lifecycle state."""


class FormatError(QrlanderError, ValueError):
    """A file on disk could not be parsed."""
