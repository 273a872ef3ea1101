"""Exception hierarchy.

``EvaluationError`` marks a *singular sample*: an evaluation that failed for a
numerical reason local to one point (domain violation, fold, lost Newton
iteration).  Grid sweeps catch it, count the point as skipped and move on.
Anything else (bad arity, malformed expression, misuse) raises ``ValueError``
subclasses and is never masked.
"""


class EvaluationError(Exception):
    """Base for per-point numerical failures that sweeps may skip."""


class JetDomainError(EvaluationError):
    """A jet operation left its domain (log of a negative value, 1/0, ...)."""

    def __init__(self, operation: str, value: float):
        super().__init__(f"{operation}: offending value {value!r}")
        self.operation = operation
        self.value = value


class NewtonConvergenceError(EvaluationError):
    """Newton (or bisection fallback) exhausted its iteration budget."""


class DegenerateRootError(EvaluationError):
    """Implicit constraint has (numerically) vanishing derivative at the root."""


class SingularMatrixError(EvaluationError):
    """A matrix solve hit a singular or badly conditioned system (fold)."""


class PoleError(EvaluationError):
    """Moebius-type map evaluated at a pole of its denominator."""


class ExprSyntaxError(ValueError):
    """Parse failure; ``position`` is the 0-based offset into the source."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class CharacteristicCrossingError(RuntimeError):
    """Characteristics crossed during integration; ``level`` is the time level."""

    def __init__(self, level: int, message: str = "characteristic crossing detected"):
        super().__init__(f"{message} at level {level}")
        self.level = level


class CFLViolationError(RuntimeError):
    """Evolved speeds exceeded the CFL bound for the fixed time step."""

    def __init__(self, level: int, dt: float, required: float):
        super().__init__(
            f"CFL violation at level {level}: dt={dt!r} exceeds allowed {required!r}"
        )
        self.level = level
