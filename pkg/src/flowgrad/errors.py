"""Exception hierarchy shared by every module."""

from __future__ import annotations


class FlowGradError(Exception):
    """Base class for all errors raised by flowgrad."""


class ValidationError(FlowGradError, ValueError):
    """Invalid parameter, configuration value or scenario field."""

    def __init__(self, message: str, location: str | None = None):
        self.message = message
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class ParseError(FlowGradError, ValueError):
    """Scenario document is not well-formed."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.message = message
        self.line = line
        self.column = column
        where = f"line {line}, column {column}: " if line is not None else ""
        super().__init__(where + message)


class NonFiniteInput(FlowGradError, ValueError):
    pass


class DomainError(FlowGradError, ValueError):
    """A point lies outside the declared domain of a field."""


class SingularMetric(FlowGradError, ArithmeticError):
    pass


class OutsideOverlap(FlowGradError, ValueError):
    """A point or orbit leaves the overlap of two charts."""


class NullOrTimelikeField(FlowGradError, ValueError):
    """g(B, B) <= 0, so no unit field exists."""


class VanishingField(FlowGradError, ArithmeticError):
    pass


class SuperluminalVelocity(FlowGradError, ValueError):
    pass


class ReferenceMismatch(FlowGradError, ValueError):
    """Two flow solutions do not share a reference point."""


class NumericalFailure(FlowGradError, ArithmeticError):
    """Base class for failures of the numerical schemes themselves."""


class MaxStepsExceeded(NumericalFailure):
    pass


class BlowUp(NumericalFailure):
    pass


class SingularGradient(NumericalFailure):
    pass


class InsufficientCoverage(FlowGradError, ValueError):
    pass


class BoundUnavailable(NumericalFailure):
    pass


class StepTooSmall(FlowGradError, ValueError):
    pass


class DegreeOutOfRange(FlowGradError, ValueError):
    pass
