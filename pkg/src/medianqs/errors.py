"""Exception types raised across the package."""


class ExpressionSyntaxError(ValueError):
    """Malformed observable text. ``offset`` is the 0-based character position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.message = message
        self.offset = offset


class UnknownIdentifierError(ExpressionSyntaxError):
    pass


class DomainError(ArithmeticError):
    pass


class NotDifferentiableError(ValueError):
    pass


class MeshMismatchError(ValueError):
    pass


class NonFiniteFieldError(ValueError):
    pass


class MalformedTreeError(ValueError):
    pass


class StepSizeTooLargeError(ValueError):
    pass


class BoundViolationError(AssertionError):
    pass


class PiTooSmallError(ValueError):
    pass
