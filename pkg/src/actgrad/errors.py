"""Exception types raised across the package."""


class ActgradError(Exception):
    """Base class for all package errors."""


class ShapeError(ActgradError, ValueError):
    def __init__(self, message, *shapes):
        self.shapes = tuple(tuple(s) for s in shapes)
        super().__init__(message)


class StateError(ActgradError, RuntimeError):
    """Backward called without (or with a stale) forward cache."""


class DataFormatError(ActgradError, ValueError):
    def __init__(self, message, *, expected=None, actual=None, record=None):
        self.expected = expected
        self.actual = actual
        self.record = record
        super().__init__(message)


class GradientCheckError(ActgradError, ArithmeticError):
    def __init__(self, message, coordinate=None):
        self.coordinate = coordinate
        super().__init__(message)
