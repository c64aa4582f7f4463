"""Exception types raised across the package."""


class PermVecError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(PermVecError, ValueError):
    pass


class InvalidStateError(PermVecError, RuntimeError):
    pass


class DegenerateBaseError(PermVecError, ValueError):
    """A base vector whose permutation orbit has fewer than G! members."""


class UndefinedRatioError(PermVecError, ArithmeticError):
    """Numeric accuracy requested for an all-zero target vector."""


class FormatError(PermVecError, ValueError):
    """A persisted file is corrupt, truncated or of the wrong version."""

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{message} (field: {field})")
        self.field = field


class ShapeMismatchError(FormatError):
    pass
