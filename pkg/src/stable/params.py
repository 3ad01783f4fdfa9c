from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np

from src.errors import DomainError

ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class StableParams:
    """Dimension and stability index of the free isotropic stable process."""
    d: int
    alpha: float

    def __post_init__(self):
        """Validate ranges after initialization."""
        if int(self.d) != self.d or self.d < 1:
            raise DomainError(f"Dimension d={self.d} must be a positive integer")
        if not (0.0 < self.alpha < 2.0):
            raise DomainError(f"Stability index alpha={self.alpha} outside (0, 2)")

    @property
    def standing_assumption(self) -> bool:
        """True in the regime d >= 2 and 1 < alpha < 2."""
        return self.d >= 2 and 1.0 < self.alpha < 2.0

    @property
    def time_exponent(self) -> float:
        return 1.0 / self.alpha

    def to_dict(self) -> Dict[str, Any]:
        return {'d': self.d, 'alpha': self.alpha}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'StableParams':
        return cls(d=int(data['d']), alpha=float(data['alpha']))


@dataclass(frozen=True)
class SpaceTimePoint:
    """A time t > 0 and a point x of R^d."""
    t: float
    x: Tuple[float, ...]

    def __post_init__(self):
        if not self.t > 0.0:
            raise DomainError(f"Time t={self.t} must be positive")
        object.__setattr__(self, 'x', tuple(float(v) for v in self.x))

    def validate(self, params: StableParams) -> None:
        if len(self.x) != params.d:
            raise DomainError(f"Point has {len(self.x)} coordinates, expected d={params.d}")


@dataclass(frozen=True)
class QuadratureConfig:
    """Accuracy parameters for adaptive quadrature."""
    rel_tol: float = 1e-8
    abs_tol: float = 1e-14
    limit: int = 200
    # accepted degradation before an AccuracyError is raised
    slack: float = 100.0

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol < 0:
            raise DomainError("Quadrature tolerances must be positive")
        if self.limit < 1:
            raise DomainError("Quadrature subdivision limit must be at least 1")

    def to_dict(self) -> Dict[str, Any]:
        return {'rel_tol': self.rel_tol, 'abs_tol': self.abs_tol,
                'limit': self.limit, 'slack': self.slack}

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> 'QuadratureConfig':
        return cls(**(data or {}))


@dataclass(frozen=True)
class TestFunction:
    """
    Smooth compactly supported scalar function with its derivatives.

    The closures take an array of points of shape (..., d) and return values
    of shape (...), gradients (..., d) and Hessians (..., d, d).
    """
    value: ArrayFn
    gradient: ArrayFn
    hessian: ArrayFn
    center: Tuple[float, ...]
    support_radius: float
    name: str = 'test_function'
    sup_norm: float = 1.0
    metadata: Dict[str, Any] = field(default_factory=dict)

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if self.support_radius <= 0:
            raise DomainError(f"Support radius {self.support_radius} must be positive")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.value(np.asarray(x, dtype=float))

    def gradient_mismatch(self, points: np.ndarray, h: float = 1e-5) -> float:
        """Largest relative gap between the gradient closure and central differences."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        d = points.shape[-1]
        analytic = self.gradient(points)
        numeric = np.empty_like(analytic)
        for k in range(d):
            step = np.zeros(d)
            step[k] = h
            numeric[..., k] = (self.value(points + step) - self.value(points - step)) / (2 * h)
        scale = np.maximum(np.abs(analytic).max(), 1e-300)
        return float(np.abs(analytic - numeric).max() / scale)
