class GuardStrengthError(Exception):
    pass


class ParseError(GuardStrengthError):
    def __init__(self, message, line=None, column=None, expected=()):
        self.line = line
        self.column = column
        self.expected = tuple(expected)
        where = f" at line {line}, column {column}" if line is not None else ""
        exp = f" (expected {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{message}{where}{exp}")


class EvalError(GuardStrengthError):
    def __init__(self, message, state=None):
        self.state = state
        if state is not None:
            message = f"{message} in state {state}"
        super().__init__(message)


class UnboundVariable(EvalError):
    pass


class DivisionByZero(EvalError):
    pass


class NegativeExpectation(EvalError):
    pass


class WhileNotSupported(GuardStrengthError):
    pass


class ContinuousNotSupported(GuardStrengthError):
    pass


class GuardMismatch(GuardStrengthError):
    pass


class InfiniteReward(GuardStrengthError):
    pass


class DomainNotClosed(GuardStrengthError):
    def __init__(self, state, source=None):
        self.state = state
        self.source = source
        super().__init__(f"domain not closed: {state} reachable from {source} is outside the domain")
