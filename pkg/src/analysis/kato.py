"""
Drift fields and their Kato-class moduli.

Both moduli are radial integrals around a probe point x with weight
|x - y|^(alpha-1-d); in polar coordinates the Jacobian leaves rho^(alpha-2),
which the substitution u = rho^(alpha-1) turns into a bounded integrand.
The supremum over x is taken over a finite probe set.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from src.errors import DomainError
from src.geometry.domain import Domain
from src.stable.kernel import DEFAULT_QUAD, _quad
from src.stable.params import QuadratureConfig, StableParams

logger = logging.getLogger(__name__)

VectorFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class DriftField:
    """
    Vector field b on D, extended by zero outside D.

    Attributes:
        func: vectorised closure (..., d) -> (..., d)
        domain: the open set D
        bound_hint: known sup-norm, if any
        description: catalog tag
        singular_points: poles of |b|, used as quadrature breakpoints
        cap: componentwise truncation level (None = untruncated)
    """
    func: VectorFn
    domain: Domain
    bound_hint: Optional[float] = None
    description: str = 'drift'
    singular_points: Tuple[Tuple[float, ...], ...] = ()
    cap: Optional[float] = None
    parameters: dict = field(default_factory=dict)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        with np.errstate(divide='ignore', invalid='ignore'):
            b = np.asarray(self.func(x), dtype=float)
        b = np.broadcast_to(b, x.shape).copy()
        if self.cap is not None:
            b = np.clip(b, -self.cap, self.cap)
        b[~np.isfinite(b)] = 0.0 if self.cap is None else self.cap
        inside = self.domain.contains(x)
        b[~inside] = 0.0
        return b

    def magnitude(self, x) -> np.ndarray:
        return np.linalg.norm(self(x), axis=-1)

    @property
    def is_zero(self) -> bool:
        return self.description == 'zero'

    def scaled(self, factor: float) -> 'DriftField':
        hint = None if self.bound_hint is None else abs(factor) * self.bound_hint
        return DriftField(lambda x: factor * self.func(x), self.domain, hint,
                          f"{factor:g}*{self.description}", self.singular_points, self.cap,
                          dict(self.parameters))

    def capped(self, level: float) -> 'DriftField':
        """b_n = (-n v (b ^ n)) 1_D."""
        if level <= 0:
            raise DomainError(f"Cap level {level} must be positive")
        hint = level * math.sqrt(self.domain.dim)
        if self.bound_hint is not None:
            hint = min(hint, self.bound_hint)
        return DriftField(self.func, self.domain, hint, f"{self.description}|cap={level:g}",
                          self.singular_points, level, dict(self.parameters))

    def __add__(self, other: 'DriftField') -> 'DriftField':
        hint = None
        if self.bound_hint is not None and other.bound_hint is not None:
            hint = self.bound_hint + other.bound_hint
        return DriftField(lambda x: self(x) + other(x), self.domain, hint,
                          f"{self.description}+{other.description}",
                          self.singular_points + other.singular_points)


def _sphere_rule(d: int, n_angles: int) -> Tuple[np.ndarray, np.ndarray]:
    """Directions and weights integrating over the unit sphere S^(d-1)."""
    if d == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if d == 2:
        theta = 2.0 * np.pi * np.arange(n_angles) / n_angles
        return (np.stack([np.cos(theta), np.sin(theta)], axis=-1),
                np.full(n_angles, 2.0 * np.pi / n_angles))
    if d == 3:
        mu, w_mu = np.polynomial.legendre.leggauss(max(n_angles // 2, 8))
        psi = 2.0 * np.pi * np.arange(n_angles) / n_angles
        m, p = np.meshgrid(mu, psi, indexing='ij')
        s = np.sqrt(1.0 - m * m)
        dirs = np.stack([s * np.cos(p), s * np.sin(p), m], axis=-1).reshape(-1, 3)
        weights = (w_mu[:, None] * np.full(n_angles, 2.0 * np.pi / n_angles)[None, :]).ravel()
        return dirs, weights
    raise DomainError(f"Angular quadrature is available for d <= 3, got d={d}")


def exit_distance(domain: Domain, x: np.ndarray, theta: np.ndarray) -> float:
    """Length of the ray x + s theta inside the (convex) domain."""
    if domain.is_whole_space:
        return math.inf
    if domain.kind == 'half_space':
        n = np.asarray(domain.normal)
        slope = float(n @ theta)
        if slope >= 0.0:
            return math.inf
        return max(float(n @ x) - domain.offset, 0.0) / -slope
    o = x - np.asarray(domain.center)
    proj = float(o @ theta)
    disc = proj * proj - float(o @ o) + domain.radius ** 2
    if disc <= 0.0:
        return 0.0
    return max(-proj + math.sqrt(disc), 0.0)


def _ray_breaks(b: DriftField, x: np.ndarray, theta: np.ndarray) -> List[float]:
    """Distances along the ray closest to each pole."""
    out = []
    for pole in b.singular_points:
        s = float((np.asarray(pole) - x) @ theta)
        if s > 0.0:
            out.append(s)
    return out


def _near_integral(params: StableParams, b: DriftField, x: np.ndarray, theta: np.ndarray,
                   upper: float, quad: QuadratureConfig) -> float:
    """int_0^upper |b(x + s theta)| s^(alpha-2) ds via u = s^(alpha-1)."""
    if upper <= 0.0:
        return 0.0
    a1 = params.alpha - 1.0

    def integrand(u: float) -> float:
        s = u ** (1.0 / a1)
        return float(b.magnitude(x + s * theta))

    points = [s ** a1 for s in _ray_breaks(b, x, theta) if 0.0 < s < upper] or None
    return _quad(integrand, 0.0, upper ** a1, quad, 'Kato modulus', points=points) / a1


def _far_integral(params: StableParams, b: DriftField, x: np.ndarray, theta: np.ndarray,
                  lower: float, upper: float, weight_power: float,
                  quad: QuadratureConfig) -> float:
    """int_lower^upper |b(x + s theta)| s^(alpha-2-weight_power) ds, weight_power > alpha-1."""
    if upper <= lower:
        return 0.0
    e = params.alpha - 1.0 - weight_power

    def integrand(v: float) -> float:
        if v <= 0.0:
            return 0.0
        s = v ** (1.0 / e)
        return float(b.magnitude(x + s * theta))

    v_hi = lower ** e
    v_lo = 0.0 if math.isinf(upper) else upper ** e
    points = [s ** e for s in _ray_breaks(b, x, theta) if lower < s < upper] or None
    return _quad(integrand, v_lo, v_hi, quad, 'Kato tail', points=points) / -e


def _probe_set(domain: Domain, probes: Optional[np.ndarray], grid_points: Optional[np.ndarray]) -> np.ndarray:
    sets = [np.atleast_2d(p) for p in (probes, grid_points) if p is not None and len(p)]
    if not sets:
        raise DomainError("Kato moduli need at least one probe point")
    return np.concatenate(sets, axis=0)


def _local_modulus_at(params, b, domain, r, quad, n_angles, x) -> float:
    dirs, weights = _sphere_rule(params.d, n_angles)
    total = 0.0
    for theta, w in zip(dirs, weights):
        total += w * _near_integral(params, b, x, theta, min(r, exit_distance(domain, x, theta)), quad)
    return total


def kato_modulus(params: StableParams, b: DriftField, domain: Domain, r: float,
                 quad: QuadratureConfig = DEFAULT_QUAD,
                 probes: Optional[np.ndarray] = None,
                 grid_points: Optional[np.ndarray] = None,
                 n_angles: int = 64, workers: int = 1,
                 whole_space: bool = False) -> float:
    """
    K^{alpha,D}_{|b|}(r) = sup_x int_{D cap B(x,r)} |b(y)| |x-y|^(alpha-1-d) dy.

    With whole_space=True the supremum and the integral run over R^d for the
    zero extension b 1_D (the global modulus).

    Args:
        params: stable parameters (alpha > 1)
        b: drift field
        domain: D
        r: radius > 0
        probes: user-supplied candidate points
        grid_points: interior grid nodes added to the candidates
        workers: joblib worker count for the probe map

    Returns:
        float: the modulus over the candidate set
    """
    if r <= 0:
        raise DomainError(f"Kato radius r={r} must be positive")
    if params.alpha <= 1.0:
        raise DomainError(f"Kato moduli need alpha > 1, got {params.alpha}")
    if b.is_zero:
        return 0.0
    region = Domain.whole_space(domain.dim) if whole_space else domain
    candidates = _probe_set(domain, probes, grid_points)
    if not whole_space:
        candidates = candidates[domain.contains(candidates)]
        if len(candidates) == 0:
            raise DomainError("No probe point lies inside the domain")
    values = Parallel(n_jobs=workers)(
        delayed(_local_modulus_at)(params, b, region, r, quad, n_angles, x) for x in candidates
    )
    best = int(np.argmax(values))
    logger.debug(f"Kato modulus r={r:g}: {values[best]:.6g} at {candidates[best].tolist()}")
    return float(values[best])


def _beta_value_at(params, b, domain, beta, t, quad, n_angles, x) -> float:
    split = t ** (1.0 / params.alpha)
    dirs, weights = _sphere_rule(params.d, n_angles)
    total = 0.0
    for theta, w in zip(dirs, weights):
        reach = exit_distance(domain, x, theta)
        near = _near_integral(params, b, x, theta, min(split, reach), quad)
        far = t ** beta * _far_integral(params, b, x, theta, split, reach,
                                        params.alpha * beta, quad)
        total += w * (near + far)
    return total


def beta_criterion(params: StableParams, b: DriftField, domain: Domain, beta: float, t: float,
                   quad: QuadratureConfig = DEFAULT_QUAD,
                   probes: Optional[np.ndarray] = None,
                   grid_points: Optional[np.ndarray] = None,
                   n_angles: int = 64, workers: int = 1) -> float:
    """
    sup_x int_D (|y-x|^(alpha-1-d) ^ t^beta |y-x|^(alpha-1-d-alpha beta)) |b(y)| dy.

    The two branches cross at |y - x| = t^(1/alpha).
    """
    if beta <= (params.alpha - 1.0) / params.alpha:
        raise DomainError(f"beta={beta} must exceed (alpha-1)/alpha={(params.alpha - 1.0) / params.alpha:.4f}")
    if t <= 0:
        raise DomainError(f"Time t={t} must be positive")
    if b.is_zero:
        return 0.0
    candidates = _probe_set(domain, probes, grid_points)
    candidates = candidates[domain.contains(candidates)]
    if len(candidates) == 0:
        raise DomainError("No probe point lies inside the domain")
    values = Parallel(n_jobs=workers)(
        delayed(_beta_value_at)(params, b, domain, beta, t, quad, n_angles, x) for x in candidates
    )
    return float(max(values))


def constant_drift_modulus(params: StableParams, r: float, norm: float = 1.0) -> float:
    """Closed form for |b| = norm on R^d: |S^(d-1)| r^(alpha-1)/(alpha-1) norm."""
    d = params.d
    sphere = 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)
    return norm * sphere * r ** (params.alpha - 1.0) / (params.alpha - 1.0)


def kato_rate_curve(params: StableParams, b: DriftField, domain: Domain,
                    radii: Sequence[float], **kwargs) -> List[Tuple[float, float]]:
    """(r, K(r)) along a radius sequence."""
    return [(float(r), kato_modulus(params, b, domain, r, **kwargs)) for r in radii]


def interior_point(domain: Domain) -> np.ndarray:
    """A fixed point of D: the centre of a ball, depth one in a half-space, the origin."""
    if domain.kind == 'ball':
        return np.asarray(domain.center, dtype=float)
    if domain.kind == 'half_space':
        n = np.asarray(domain.normal, dtype=float)
        return (domain.offset + 1.0) * n
    return np.zeros(domain.dim)


def _offset_direction(d: int) -> np.ndarray:
    """Unit vector half a step of the 64-direction rule away from the first axis."""
    if d == 1:
        return np.ones(1)
    v = np.zeros(d)
    v[0], v[1] = math.cos(math.pi / 64.0), math.sin(math.pi / 64.0)
    if d > 2:
        v[2:] = 0.1
    return v / np.linalg.norm(v)


def scaled_probes(b: DriftField, domain: Domain, scale: float,
                  probes: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Probe points for the moduli at length scale `scale`: the given probes (or
    an interior point) plus one point at distance scale/2 from every pole.
    Points on a pole are dropped.
    """
    base = interior_point(domain)[None, :] if probes is None else np.atleast_2d(probes)
    v = _offset_direction(domain.dim)
    sets = [base] + [(np.asarray(p, dtype=float) + 0.5 * scale * v)[None, :]
                     for p in b.singular_points]
    candidates = np.concatenate(sets, axis=0)
    keep = domain.contains(candidates)
    for pole in b.singular_points:
        keep &= np.linalg.norm(candidates - np.asarray(pole), axis=-1) > 1e-12
    return candidates[keep]


def decay_slope(scales: Sequence[float], values: Sequence[float]) -> float:
    """Least-squares slope of log(value) against log(scale); inf when a value is zero."""
    values = np.asarray(values, dtype=float)
    if np.any(values <= 0.0):
        return math.inf
    return float(np.polyfit(np.log(scales), np.log(values), 1)[0])


def co_vanishing(params: StableParams, b: DriftField, domain: Domain, beta: float,
                 eps: float, k_max: int = 5, min_slope: float = 0.05,
                 probes: Optional[np.ndarray] = None, whole_space: bool = False,
                 **kwargs) -> dict:
    """
    Compare K(10^-k) and the beta integral at t = 10^-k, k = 1..k_max.

    A sequence vanishes when its last value is below eps or when it decays
    like a power of the scale with exponent at least min_slope. Probes follow
    the poles of b down the scales, so a drift outside the Kato class shows a
    flat or growing sequence for both quantities.
    """
    ks = list(range(1, k_max + 1))
    radii = [10.0 ** -k for k in ks]
    kato = [kato_modulus(params, b, domain, r, probes=scaled_probes(b, domain, r, probes),
                         whole_space=whole_space, **kwargs) for r in radii]
    beta_vals = [beta_criterion(params, b, domain, beta, t,
                                probes=scaled_probes(b, domain, t ** (1.0 / params.alpha), probes),
                                **kwargs) for t in radii]
    kato_slope = decay_slope(radii, kato)
    beta_slope = decay_slope(radii, beta_vals)
    kato_vanishes = bool(kato[-1] < eps or kato_slope >= min_slope)
    beta_vanishes = bool(beta_vals[-1] < eps or beta_slope >= min_slope)
    result = {
        'k': ks,
        'kato': kato,
        'beta': beta_vals,
        'kato_slope': kato_slope,
        'beta_slope': beta_slope,
        'kato_vanishes': kato_vanishes,
        'beta_vanishes': beta_vanishes,
        'consistent': kato_vanishes == beta_vanishes,
    }
    logger.info(f"Kato/beta co-vanishing for {b.description}: "
                f"K={kato[-1]:.3e} (slope {kato_slope:.3g}), beta={beta_vals[-1]:.3e} "
                f"(slope {beta_slope:.3g}), consistent={result['consistent']}")
    return result
