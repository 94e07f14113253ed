"""Exception hierarchy shared by every falva module."""

from __future__ import annotations


class FalvaError(Exception):
    """Base class for all errors raised by falva."""


# symbolic kernel


class UnsupportedFunction(FalvaError):
    pass


class UnboundSymbol(FalvaError):
    pass


class DomainError(FalvaError, ArithmeticError):
    pass


class SampleRejected(FalvaError):
    pass


class ConfigError(FalvaError):
    pass


class NonlinearInSymbol(FalvaError):
    pass


# variational objects


class GaugeUnresolvable(FalvaError):
    pass


# numerics


class NonlinearInTopDerivative(NonlinearInSymbol):
    pass


class SingularLeadingCoefficient(FalvaError):
    def __init__(self, theta: float, message: str | None = None):
        self.theta = theta
        super().__init__(message or f"leading coefficient singular at theta={theta!r}")


class StepUnderflow(FalvaError):
    def __init__(self, theta: float, h: float):
        self.theta = theta
        self.h = h
        super().__init__(f"step size {h:.3e} fell below h_min at theta={theta!r}")


class MaxStepsExceeded(FalvaError):
    pass


# input


class ParseError(FalvaError):
    """Syntax error in an expression; ``line`` and ``column`` are 1-based."""

    def __init__(self, message: str, line: int = 1, column: int = 1, token: str = ""):
        self.message = message
        self.line = line
        self.column = column
        self.token = token
        super().__init__(f"{message} at line {line}, column {column}"
                         + (f" (near {token!r})" if token else ""))


class UnknownIdentifier(ParseError):
    pass


class OrderExceeded(ParseError):
    pass


class SchemaError(FalvaError):
    def __init__(self, path: str, message: str | None = None):
        self.path = path
        super().__init__(path if message is None else f"{path} {message}")
