"""
Error hierarchy shared by every snellforge module.

Validation failures carry a machine-readable code plus the list of violations
found, so the CLI can print diagnostics and map the class to an exit code.
"""

from dataclasses import dataclass
from typing import Any, List, Optional


@dataclass(frozen=True)
class Violation:
    """A single violated invariant, located at a node when that makes sense."""

    code: str
    message: str
    node: Optional[int] = None

    def to_dict(self) -> dict:
        return {'code': self.code, 'node': self.node, 'message': self.message}

    def __str__(self) -> str:
        where = f" at node {self.node}" if self.node is not None else ""
        return f"{self.code}{where}: {self.message}"


class SnellforgeError(Exception):
    """Base class for all snellforge errors."""


class ValidationError(SnellforgeError, ValueError):
    """
    Input does not satisfy a structural invariant.

    Args:
        message: Human-readable summary
        violations: Every violation found (may be empty)
    """

    code = 'ValidationError'

    def __init__(self, message: str, violations: Optional[List[Violation]] = None):
        self.violations: List[Violation] = list(violations or [])
        if self.violations:
            details = "\n".join(f"  - {v}" for v in self.violations)
            message = f"{message}\n{details}"
        super().__init__(message)

    @classmethod
    def from_violations(cls, violations: List[Violation]) -> 'ValidationError':
        return cls(f"{cls.code}: {len(violations)} violation(s)", violations)


class NonPositiveProbability(ValidationError):
    code = 'NonPositiveProbability'


class ProbabilitySumMismatch(ValidationError):
    code = 'ProbabilitySumMismatch'


class NoiseNotCentered(ValidationError):
    code = 'NoiseNotCentered'


class MissingNodeValue(ValidationError):
    code = 'MissingNodeValue'


class PreNotPredictable(ValidationError):
    code = 'PreNotPredictable'


class Pre0Mismatch(ValidationError):
    code = 'Pre0Mismatch'


class SpaceMismatch(ValidationError):
    code = 'SpaceMismatch'


class NegativeBeta(ValidationError):
    code = 'NegativeBeta'


class NotAStoppingTime(ValidationError):
    code = 'NotAStoppingTime'


class HNotPredictable(ValidationError):
    code = 'HNotPredictable'


class HOutsideStopSet(ValidationError):
    code = 'HOutsideStopSet'


class NotPredictable(ValidationError):
    code = 'NotPredictable'


class EventNotMeasurable(ValidationError):
    code = 'EventNotMeasurable'


class UnsupportedTerminal(ValidationError):
    code = 'UnsupportedTerminal'


class NotASupermartingale(ValidationError):
    code = 'NotASupermartingale'


class NotAMartingale(ValidationError):
    code = 'NotAMartingale'


class LambdaOutOfRange(ValidationError):
    code = 'LambdaOutOfRange'


class NegativeObstacle(ValidationError):
    code = 'NegativeObstacle'


class NotAdmissible(ValidationError):
    code = 'NotAdmissible'


class DriverSpecError(ValidationError):
    code = 'DriverSpecError'


class ScenarioError(ValidationError):
    code = 'ScenarioError'


class CapExceeded(ValidationError):
    code = 'CapExceeded'


class EnumerationCapExceeded(CapExceeded):
    code = 'EnumerationCapExceeded'


class ConvergenceError(SnellforgeError):
    """An iterative scheme stopped before reaching its tolerance."""

    def __init__(self, message: str, trace: Any = None):
        super().__init__(message)
        self.trace = trace


class NoConvergence(ConvergenceError):
    pass


class MokobodzkiFailed(ConvergenceError):
    pass


class VerificationError(SnellforgeError):
    """A computed solution fails one of its defining identities."""


class CoupledResidualTooLarge(VerificationError):
    def __init__(self, residual: float, tolerance: float):
        super().__init__(f"Coupled fixed-point residual {residual:.3e} exceeds {tolerance:.1e}")
        self.residual = residual
        self.tolerance = tolerance


class InvariantViolation(VerificationError):
    def __init__(self, invariant: str, deviation: float, tolerance: float):
        super().__init__(f"Invariant '{invariant}' violated: deviation {deviation:.3e} > {tolerance:.1e}")
        self.invariant = invariant
        self.deviation = deviation
        self.tolerance = tolerance
