class QrefError(Exception):
    """Base class for errors raised by qref."""


class DimensionError(QrefError, ValueError):
    pass


class NotPSDError(QrefError, ValueError):
    pass


class InvalidPredicateError(QrefError, ValueError):
    pass


class InvalidProgramError(QrefError, ValueError):
    pass


class SideConditionError(QrefError):
    """An order check fell outside the non-emptiness conditions that make it decidable."""


class ContractError(QrefError):
    """A precondition of a witness or certificate routine was violated."""


class IndeterminateError(QrefError):
    """The cutting-plane solver ran out of budget before deciding."""

    def __init__(self, message, lower=None, upper=None):
        super().__init__(f"{message} (lower={lower}, upper={upper})")
        self.lower = lower
        self.upper = upper


class NonConvergenceError(QrefError):
    def __init__(self, message, delta=None):
        super().__init__(f"{message} (last delta={delta})")
        self.delta = delta


class ParseError(QrefError):
    def __init__(self, message, line, col):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col
