"""Exception hierarchy shared by the numerical library and the command line."""

from typing import Any, Dict, List, Optional


class FractionalMFGError(Exception):
    """Base error carrying a CLI exit status and a JSON-ready diagnostic."""

    exit_code: int = 1

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def to_diagnostic(self) -> Dict[str, Any]:
        """Format the error as a diagnostic dictionary."""
        return {
            "error": self.message,
            "type": self.__class__.__name__,
            "exit_code": self.exit_code,
            "details": self.details,
        }


class ValidationError(FractionalMFGError):
    """Invalid input; nothing was computed."""

    exit_code = 2


class DomainError(ValidationError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class ConfigurationError(ValidationError):
    """Malformed run configuration or inconsistent objects."""


class DegenerateSubordinatorError(DomainError):
    """The stable density does not exist as a function for beta = 1."""

    def __init__(self):
        super().__init__(
            "degenerate subordinator: beta = 1 has a Dirac mass density, use the classical branch",
            {"beta": 1.0},
        )


class MellinDivergenceError(DomainError):
    """Mellin integral diverges for omega >= 1 + 1/beta."""


class NoContractionError(FractionalMFGError):
    """Picard iteration did not contract."""

    exit_code = 3

    def __init__(self, message: str, residual_history: List[float], details: Optional[Dict[str, Any]] = None):
        payload = {"residual_history": [float(r) for r in residual_history]}
        payload.update(details or {})
        super().__init__(message, payload)
        self.residual_history = list(residual_history)


class IterationCeilingError(NoContractionError):
    """Iterates left the configured norm ceiling."""


class NumericalCheckError(FractionalMFGError):
    """A numerical check or a numerical routine failed its own accuracy contract."""

    exit_code = 4


class SeriesBudgetError(NumericalCheckError):
    """Power series did not reach its tolerance within the term budget."""


class TruncationTooSmallError(NumericalCheckError):
    """Integrand tail at the domain cut is not negligible."""

    def __init__(self, tail: float, domain_cut: float, tolerance: float):
        super().__init__(
            f"truncation too small: tail {tail:.3e} at domain_cut={domain_cut} exceeds {tolerance:.1e}",
            {"tail": float(tail), "domain_cut": float(domain_cut), "tolerance": float(tolerance)},
        )
        self.tail = tail


class FitUnreliableError(NumericalCheckError):
    """Log-log fit data is non-monotone or the fit residual is too large."""

    def __init__(self, message: str, residual: float):
        super().__init__(message, {"residual": float(residual)})
        self.residual = residual
