"""
Base kernels p0 for the Duhamel series.

Every base has the separable form p0(t, x, z) = w(t, x) w(t, z) p(t, x - z)
with p the free kernel:

    free          w = 1
    envelope      w = q~ = 1 ^ rho^(alpha/2) / sqrt(t)   (surrogate for p^D)
    monte_carlo   w = q~ exp(f(t, rho)) with f from a fitted RatioSurface
"""

import logging
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from src.analysis.envelope import _q_from_rho
from src.duhamel.field import KernelField
from src.duhamel.grid import GridSpec
from src.errors import ContractError, DomainError
from src.geometry.domain import Domain
from src.montecarlo.surface import DEFAULT_MAX_REL_CI, RatioSurface
from src.stable.params import StableParams
from src.stable.profile import profile_for

logger = logging.getLogger(__name__)

SOURCES = ('free', 'envelope', 'monte_carlo')


class BaseKernel:
    """Free kernel; subclasses supply the boundary weight."""
    name = 'free'
    provenance = 'quadrature'

    def __init__(self, params: StableParams, domain: Domain):
        if domain.dim != params.d:
            raise DomainError(f"Domain dimension {domain.dim} differs from d={params.d}")
        self.params = params
        self.domain = domain
        self.profile = profile_for(params)

    def weight(self, t: float, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """w(t, x) and grad_x w(t, x) at points of shape (n, d)."""
        points = np.atleast_2d(points)
        return np.ones(len(points)), np.zeros_like(points, dtype=float)

    def values(self, t: float, points: np.ndarray, anchor: Sequence[float]) -> np.ndarray:
        """p0(t, x, anchor) at every x in points."""
        anchor = np.asarray(anchor, dtype=float)
        wx, _ = self.weight(t, points)
        wa, _ = self.weight(t, anchor[None, :])
        return wx * wa[0] * self.profile.kernel(t, points - anchor)

    def gradients(self, t: float, points: np.ndarray, anchor: Sequence[float]) -> np.ndarray:
        """grad_x p0(t, x, anchor) at every x in points, shape (n, d)."""
        anchor = np.asarray(anchor, dtype=float)
        wx, gwx = self.weight(t, points)
        wa, _ = self.weight(t, anchor[None, :])
        diff = points - anchor
        p = self.profile.kernel(t, diff)
        gp = self.profile.gradient(t, diff)
        return wa[0] * (gwx * p[:, None] + wx[:, None] * gp)

    def describe(self) -> Dict[str, Any]:
        return {'source': self.name, 'provenance': self.provenance}


class EnvelopeKernel(BaseKernel):
    """q^D(t, x, z) = q~(t, x) q~(t, z) p(t, x - z)."""
    name = 'envelope'
    provenance = 'surrogate'

    def weight(self, t: float, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        points = np.atleast_2d(points)
        alpha = self.params.alpha
        rho = self.domain.distance(points)
        w = _q_from_rho(alpha, rho, t)
        grad = np.zeros_like(points, dtype=float)
        if self.domain.is_whole_space:
            return w, grad
        below = (w < 1.0) & (rho > 0.0)
        slope = 0.5 * alpha * rho[below] ** (0.5 * alpha - 1.0) / np.sqrt(t)
        grad[below] = slope[:, None] * self.domain.distance_gradient(points[below])
        return w, grad


class MonteCarloKernel(EnvelopeKernel):
    """Envelope shape corrected by exp(f(t, rho)) from a fitted ratio surface."""
    name = 'monte_carlo'
    provenance = 'mc'

    def __init__(self, params: StableParams, domain: Domain, surface: RatioSurface,
                 slope_step: float = 0.05):
        super().__init__(params, domain)
        if surface.params != params:
            raise ContractError("Ratio surface was fitted for different stable parameters")
        self.surface = surface
        self.slope_step = slope_step

    def weight(self, t: float, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        points = np.atleast_2d(points)
        q, grad_q = super().weight(t, points)
        rho = self.domain.distance(points)
        inside = rho > 0.0
        f = np.zeros(len(points))
        slope = np.zeros(len(points))
        f[inside] = self.surface.log_weight(t, rho[inside])
        slope[inside] = self.surface.log_weight_slope(t, rho[inside], self.slope_step)
        if self.domain.is_whole_space:
            slope[:] = 0.0
        ef = np.exp(f)
        grad_rho = self.domain.distance_gradient(points)
        grad = ef[:, None] * (grad_q + (q * slope)[:, None] * grad_rho)
        return q * ef, grad

    def gradient_noise(self, t: float, points: np.ndarray) -> float:
        rho = self.domain.distance(points)
        rho = rho[np.isfinite(rho) & (rho > 0.0)]
        if not rho.size:
            return 0.0
        return self.surface.slope_noise(t, rho, self.slope_step)

    def describe(self) -> Dict[str, Any]:
        return {**super().describe(), 'surface': self.surface.describe()}


def make_kernel(source: str, params: StableParams, domain: Domain,
                surface: Optional[RatioSurface] = None,
                max_rel_ci: float = DEFAULT_MAX_REL_CI) -> BaseKernel:
    """Base kernel by name; 'monte_carlo' needs a surface of sufficient quality."""
    if source == 'free':
        return BaseKernel(params, domain)
    if source == 'envelope':
        return EnvelopeKernel(params, domain)
    if source == 'monte_carlo':
        if surface is None:
            raise ContractError("The monte_carlo base kernel needs a fitted ratio surface")
        surface.require_quality(max_rel_ci)
        return MonteCarloKernel(params, domain, surface)
    raise ContractError(f"Unknown base kernel '{source}', expected one of {SOURCES}")


def gradient_constant(kernel: BaseKernel, grid: GridSpec, values: np.ndarray,
                      gradients: np.ndarray, floor: float = 1e-10) -> float:
    """
    Smallest C with |grad p0| <= C p0 / (rho ^ t^(1/alpha)) over the tabulated nodes.
    """
    rho = kernel.domain.distance(grid.points)
    ratios = []
    for i, t in enumerate(grid.times):
        scale = np.minimum(rho, t ** (1.0 / kernel.params.alpha))
        keep = values[i] > floor * values[i].max()
        ratios.append(np.linalg.norm(gradients[i][keep], axis=1) * scale[keep] / values[i][keep])
    return float(np.max(np.concatenate(ratios)))


def tabulate_base_kernel(kernel: BaseKernel, grid: GridSpec,
                         anchor: Sequence[float]) -> KernelField:
    """
    p0(t, x, y) for the fixed target y = anchor at every grid time and node.

    The anchor is snapped to the nearest node. The field is symmetric, so it
    may also be used with the anchor as source.
    """
    if kernel.domain != grid.domain:
        raise ContractError("Kernel and grid live on different domains")
    index = grid.node_index(anchor)
    point = grid.points[index]
    if np.linalg.norm(point - np.asarray(anchor, dtype=float)) > grid.spacing:
        logger.warning(f"Anchor {list(anchor)} snapped to node {point.tolist()}")
    values = np.stack([kernel.values(t, grid.points, point) for t in grid.times])
    grads = np.stack([kernel.gradients(t, grid.points, point) for t in grid.times])
    meta: Dict[str, Any] = {'symmetric': True, 'source': kernel.name,
                            'provenance': kernel.provenance,
                            'gradient_constant': gradient_constant(kernel, grid, values, grads)}
    if isinstance(kernel, MonteCarloKernel):
        meta['gradient_noise'] = max(kernel.gradient_noise(t, grid.points) for t in grid.times)
    return KernelField(grid=grid, values=values, anchor_index=index, gradients=grads,
                       role='target', order=0, signed=False, label=f'p0[{kernel.name}]',
                       kernel=kernel, meta=meta)
