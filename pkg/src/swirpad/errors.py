"""Exception hierarchy shared by every module.

All errors derive from :class:`PadError` so the command line can map them
to exit codes in one place.
"""


class PadError(Exception):
    """Base class for data and usage errors raised by swirpad."""


class IoError(PadError, OSError):
    pass


class MissingFile(PadError, FileNotFoundError):
    pass


class DuplicateId(PadError, ValueError):
    pass


class BadSchema(PadError, ValueError):
    pass


class BadImage(PadError, ValueError):
    pass


class BadConfig(PadError, ValueError):
    pass


class UnknownId(PadError, KeyError):
    def __str__(self):
        # KeyError quotes its argument; keep diagnostics readable
        return str(self.args[0]) if self.args else ""


class OutOfBounds(PadError, ValueError):
    pass


class OutOfRange(PadError, ValueError):
    pass


class DimensionMismatch(PadError, ValueError):
    pass


class ShapeMismatch(PadError, ValueError):
    pass


class SingleClass(PadError, ValueError):
    pass


class EmptyInput(PadError, ValueError):
    pass


class EmptySet(PadError, ValueError):
    pass


class KeyMismatch(PadError, ValueError):
    pass


class AlphaOutOfRange(PadError, ValueError):
    pass


class EmptyCurve(PadError, ValueError):
    pass


class NonConvergence(PadError, RuntimeError):
    """Raised by callers that refuse a model flagged as not converged."""
