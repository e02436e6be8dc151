"""
Regret Lab Exceptions
Error hierarchy shared by the numerical core, the learners and the CLI
"""
from typing import Optional


class RegretLabError(Exception):
    """Base exception for every error raised by the lab"""
    pass


class DimensionMismatchError(RegretLabError, ValueError):
    """Operands with incompatible shapes"""
    pass


class NumericInputError(RegretLabError, ValueError):
    """NaN or infinite values handed to a numeric routine"""
    pass


class NonSpdError(RegretLabError):
    """Matrix failed the positive-definiteness factorization"""
    pass


class NumericAbortError(RegretLabError):
    """Non-finite intermediate inside a learner update"""

    def __init__(self, message: str, step: Optional[int] = None):
        self.step = step
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)


class ConvergenceError(RegretLabError):
    """Newton solver stopped before reaching the gradient tolerance"""

    def __init__(self, message: str, gradient_norm: float):
        self.gradient_norm = gradient_norm
        super().__init__(f"{message} (final gradient norm {gradient_norm:.3e})")


class StreamParseError(RegretLabError):
    """Malformed observation file"""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class ConfigError(RegretLabError):
    """Invalid experiment configuration"""
    pass


class InsufficientDataError(RegretLabError):
    """Too few replicates for a Monte Carlo aggregate"""
    pass


class InfeasibleConstantError(RegretLabError):
    """No integer k satisfies 1 < k*a < 2"""

    def __init__(self, a: float):
        self.a = a
        super().__init__(f"no integer k with 1 < k*a < 2 for a = {a:.6g}")
