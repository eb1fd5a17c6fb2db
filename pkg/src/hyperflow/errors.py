"""Error hierarchy for hyperflow.

Every error carries the process exit code the CLI reports for it:
2 for invalid input, 3 for numerical failures.
"""

from typing import Optional

EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_USAGE = 64


class HyperflowError(Exception):
    """Base class for all library errors."""

    exit_code: int = EXIT_VALIDATION

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message

    def to_dict(self) -> dict:
        return {"error": type(self).__name__, "message": self.message}


# Validation failures (exit 2)


class StructureError(HyperflowError, ValueError):
    """Shape or dimension mismatch between matrices, vectors or signatures."""


class InvalidStructureError(HyperflowError, ValueError):
    """A triple that does not satisfy the quaternionic relations."""


class ExpressionSyntaxError(HyperflowError, ValueError):
    """Malformed scenario expression."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at offset {position}")
        self.position = position

    def to_dict(self) -> dict:
        return {**super().to_dict(), "position": self.position}


class UnknownVariableError(HyperflowError, ValueError):
    """Variable outside x1..x{4n}, r1..rn."""

    def __init__(self, name: str, position: int):
        super().__init__(f"unknown variable '{name}' at offset {position}")
        self.name = name
        self.position = position


class NotRepresentableError(HyperflowError, ValueError):
    """Profile with no Hamiltonian triple we can construct."""


class SingularCoordinateError(HyperflowError, ValueError):
    """Action-spin coordinates requested at a vanishing block radius."""


class ScenarioError(HyperflowError, ValueError):
    """Scenario file that does not validate; `field` names the offending key."""

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.field = field

    def to_dict(self) -> dict:
        return {**super().to_dict(), "field": self.field}


# Numerical failures (exit 3)


class NumericalError(HyperflowError, ArithmeticError):
    exit_code = EXIT_NUMERICAL


class DegenerateStructureError(NumericalError):
    """Pfaffian too close to zero to read an orientation."""


class ZeroFrequencyError(NumericalError):
    """Flow matrix requested for a stationary (nu = 0) generator."""


class DivergenceError(NumericalError):
    """Integrator produced a non-finite state."""

    def __init__(self, message: str, time: float):
        super().__init__(f"{message} at t={time!r}")
        self.time = time

    def to_dict(self) -> dict:
        return {**super().to_dict(), "time": self.time}


class DegenerateSystemError(NumericalError):
    """Invariance equation posed with c = 0."""


class InconsistencyError(NumericalError):
    """Solver output contradicts the expected algebra structure."""


class NonClosureError(NumericalError):
    """Brackets of a basis leave its span."""
