"""Exception types.  Each maps to a CLI exit code."""


class TwistbadError(Exception):
    exit_code = 1


class ValidationError(TwistbadError, ValueError):
    exit_code = 2


class DomainError(ValidationError):
    """Argument outside the mathematical domain of an operation."""


class BudgetExceeded(TwistbadError):
    exit_code = 3


class InvariantViolation(TwistbadError):
    """A checked inequality failed; ``tag`` names it."""

    exit_code = 4

    def __init__(self, tag: str, message: str, **details):
        super().__init__(f"[{tag}] {message}")
        self.tag = tag
        self.details = details


class Fact1Violation(InvariantViolation):
    def __init__(self, message: str, **details):
        super().__init__("Fact1", message, **details)


class Fact2Violation(InvariantViolation):
    def __init__(self, message: str, **details):
        super().__init__("Fact2", message, **details)


class CurveSpecError(ValidationError):
    pass


class GammaTooLarge(TwistbadError):
    """An integer point shows the dual badness constant is not a lower bound."""

    def __init__(self, message: str, witness=None):
        super().__init__(message)
        self.witness = witness


class RangeExhausted(TwistbadError):
    def __init__(self, message: str, max_admissible_q: int):
        super().__init__(message)
        self.max_admissible_q = max_admissible_q
