"""Exception types shared by every module.

``ParameterError`` and ``FormatError`` derive from ``ValueError`` and
``ImageIOError`` from ``OSError`` so callers can catch either the package
base class or the builtin they already expect.
"""


class KernelSRError(Exception):
    """Base class for all package errors."""


class ParameterError(KernelSRError, ValueError):
    """Arguments violate an operation's preconditions."""


class FormatError(KernelSRError, ValueError):
    """A file is not in a supported format or is malformed."""


class ImageIOError(KernelSRError, OSError):
    """A file could not be read or written."""


class NumericalError(KernelSRError, ArithmeticError):
    """A numerical procedure failed, e.g. a singular linear system."""
