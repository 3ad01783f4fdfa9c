"""
Catalog of drift fields addressable by name from experiment configurations.
"""

import logging
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from src.analysis.kato import DriftField, interior_point
from src.errors import ConfigError
from src.geometry.domain import Domain

logger = logging.getLogger(__name__)


def zero_drift(domain: Domain) -> DriftField:
    return DriftField(lambda x: np.zeros_like(x), domain, 0.0, 'zero')


def constant_drift(domain: Domain, vector: Sequence[float]) -> DriftField:
    v = np.asarray(vector, dtype=float)
    if v.shape != (domain.dim,):
        raise ConfigError('drift.vector', f"expected {domain.dim} components, got {v.shape}")
    return DriftField(lambda x: np.broadcast_to(v, np.shape(x)), domain,
                      float(np.linalg.norm(v)), 'constant', parameters={'vector': v.tolist()})


def smooth_compact_drift(domain: Domain, center: Sequence[float], radius: float,
                         vector: Sequence[float]) -> DriftField:
    """vector * bump(|x - center| / radius), compactly supported and smooth."""
    c = np.asarray(center, dtype=float)
    v = np.asarray(vector, dtype=float)

    def func(x: np.ndarray) -> np.ndarray:
        q = np.sum((x - c) ** 2, axis=-1) / radius ** 2
        inside = q < 1.0
        u = np.where(inside, 1.0 - q, 1.0)
        amp = np.where(inside, np.exp(1.0 - 1.0 / u), 0.0)
        return amp[..., None] * v

    return DriftField(func, domain, float(np.linalg.norm(v)), 'smooth_compact',
                      parameters={'center': c.tolist(), 'radius': radius, 'vector': v.tolist()})


def singular_drift(domain: Domain, pole: Sequence[float], power: float,
                   strength: float = 1.0) -> DriftField:
    """
    Radial field strength (x - pole)/|x - pole| |x - pole|^(-power).

    In the Kato class K^(alpha-1) iff power < alpha - 1.
    """
    y0 = np.asarray(pole, dtype=float)
    if not domain.contains(y0):
        raise ConfigError('drift.pole', f"pole {y0.tolist()} must lie inside the domain")

    def func(x: np.ndarray) -> np.ndarray:
        diff = x - y0
        r = np.linalg.norm(diff, axis=-1, keepdims=True)
        return strength * diff * r ** (-power - 1.0)

    return DriftField(func, domain, None, 'singular', singular_points=(tuple(y0),),
                      parameters={'pole': y0.tolist(), 'power': power, 'strength': strength})


class DriftCatalog:
    """Named drift constructors with their Kato-class expectation."""

    BUILDERS: Dict[str, Callable[..., DriftField]] = {
        'zero': zero_drift,
        'constant': constant_drift,
        'smooth_compact': smooth_compact_drift,
        'singular': singular_drift,
    }

    @classmethod
    def names(cls) -> Sequence[str]:
        return tuple(cls.BUILDERS)

    @classmethod
    def build(cls, spec: Dict[str, Any], domain: Domain) -> DriftField:
        """
        Build a drift from its configuration entry, e.g.
        {"name": "constant", "vector": [0.3, 0.0]} or
        {"name": "singular", "pole": [0, 0], "power": 0.2, "cap": 50}.
        """
        spec = dict(spec)
        name = spec.pop('name', None)
        if name not in cls.BUILDERS:
            raise ConfigError('drift.name', f"unknown drift '{name}', expected one of {list(cls.BUILDERS)}")
        cap = spec.pop('cap', None)
        try:
            drift = cls.BUILDERS[name](domain, **spec)
        except TypeError as e:
            raise ConfigError('drift', f"bad parameters for '{name}': {e}")
        if cap is not None:
            drift = drift.capped(float(cap))
        logger.debug(f"Built drift '{drift.description}' with parameters {drift.parameters}")
        return drift

    @staticmethod
    def in_kato_class(drift: DriftField, alpha: float) -> Optional[bool]:
        """Expected membership in K^(alpha-1) (None when unknown)."""
        if drift.description.startswith(('zero', 'constant', 'smooth_compact')):
            return True
        if drift.cap is not None:
            return True
        if drift.description.startswith('singular'):
            return drift.parameters['power'] < alpha - 1.0
        return None

    @classmethod
    def reference_drifts(cls, domain: Domain, alpha: float) -> List[DriftField]:
        """
        One drift per catalog entry, anchored at a fixed interior point, with
        a singular drift on each side of the Kato threshold power alpha - 1.
        """
        x0 = interior_point(domain).tolist()
        unit = [1.0] + [0.0] * (domain.dim - 1)
        specs = [
            {'name': 'zero'},
            {'name': 'constant', 'vector': unit},
            {'name': 'smooth_compact', 'center': x0, 'radius': 0.5, 'vector': unit},
            {'name': 'singular', 'pole': x0, 'power': 0.5 * (alpha - 1.0)},
            {'name': 'singular', 'pole': x0, 'power': alpha - 0.75},
        ]
        return [cls.build(spec, domain) for spec in specs]
