"""
Error taxonomy shared by every subpackage.

Value-type errors also derive from ValueError so callers can keep catching
ValueError for bad inputs.
"""

from typing import Any, Optional, Sequence


class StableDriftError(Exception):
    """Base class for all library errors."""


class DomainError(StableDriftError, ValueError):
    """A parameter lies outside its admissible range."""


class AccuracyError(StableDriftError, RuntimeError):
    """Quadrature did not reach the requested tolerance."""

    def __init__(self, message: str, achieved: float, requested: float):
        super().__init__(f"{message} (achieved {achieved:.3e}, requested {requested:.3e})")
        self.achieved = achieved
        self.requested = requested


class EmptyGridError(StableDriftError, ValueError):
    """The bounding box does not intersect the domain."""


class ContractError(StableDriftError, ValueError):
    """Inputs violate an operation's contract (missing gradients, wrong grid...)."""


class NumericError(StableDriftError, RuntimeError):
    """NaN or overflow in an integrand."""

    def __init__(self, message: str, node: Optional[Sequence[Any]] = None):
        super().__init__(message if node is None else f"{message} at node {tuple(node)}")
        self.node = node


class NonContractionError(StableDriftError, RuntimeError):
    """Empirical contraction constant is not below one."""

    def __init__(self, c_emp: float, horizon: float, suggested_horizon: float):
        super().__init__(
            f"C_emp={c_emp:.4f} >= 1 at horizon {horizon:g}; "
            f"retry with a horizon of at most {suggested_horizon:g}"
        )
        self.c_emp = c_emp
        self.horizon = horizon
        self.suggested_horizon = suggested_horizon


class ConvergenceQualityError(StableDriftError, RuntimeError):
    """Summed series went negative beyond the diagnostics slack."""


class QualityError(StableDriftError, RuntimeError):
    """Monte Carlo estimate is too noisy for the requested use."""


class UndefinedRatioError(StableDriftError, ValueError):
    """A ratio check has a vanishing denominator."""


class ConfigError(StableDriftError, ValueError):
    """Experiment configuration failed validation."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class ManifestError(StableDriftError, OSError):
    """Run manifest is missing or unreadable."""
