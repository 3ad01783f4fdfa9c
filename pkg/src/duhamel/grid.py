"""
Space-time grids for the Duhamel series and the spectral lattice that
evaluates every spatial integral on them.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss

from src.errors import DomainError
from src.geometry.domain import BoxSpec, Domain, InteriorGrid, interior_grid
from src.stable.params import StableParams
from src.stable.profile import profile_for

logger = logging.getLogger(__name__)


def graded_time_rule(t: float, alpha: float, n_panels: int = 8,
                     order: int = 4) -> Tuple[np.ndarray, np.ndarray]:
    """
    Composite Gauss-Legendre rule on (0, t).

    Panels on [0, t/2] end at (t/2)(j/n)^(alpha/(alpha-1)), so that the
    s^(-1/alpha) endpoint behaviour is integrated with O(h) panels in
    u = s^((alpha-1)/alpha); [t/2, t] carries the mirrored panels.
    """
    if not t > 0.0:
        raise DomainError(f"Time t={t} must be positive")
    grade = alpha / (alpha - 1.0) if alpha > 1.0 else 2.0
    half = 0.5 * t * (np.arange(n_panels + 1) / n_panels) ** grade
    breaks = np.concatenate([half, t - half[-2::-1]])
    x, w = leggauss(order)
    a, b = breaks[:-1, None], breaks[1:, None]
    nodes = (0.5 * (b - a) * x + 0.5 * (b + a)).ravel()
    weights = (0.5 * (b - a) * w).ravel()
    return nodes, weights


@dataclass
class GridSpec:
    """
    Time nodes, spatial nodes of D inside a box, and the inner time rule.

    Attributes:
        params: stable parameters
        domain: the open set (whole space allowed)
        box: bounding box of the lattice
        nodes: interior grid of the domain in the box
        times: strictly increasing time nodes in (0, horizon], geometric towards 0
        n_panels: panels per half of the inner time rule
        gl_order: Gauss-Legendre order per panel
        tail_mass: mass of the free kernel at the horizon outside the box radius
    """
    params: StableParams
    domain: Domain
    box: BoxSpec
    nodes: InteriorGrid
    times: np.ndarray
    n_panels: int = 8
    gl_order: int = 4
    tail_mass: float = 0.0
    eps_tail: float = 1e-4
    settings: dict = field(default_factory=dict)

    @classmethod
    def build(cls, params: StableParams, domain: Domain, half_width: float = 6.0,
              spacing: float = 0.1875, horizon: float = 0.5, n_times: int = 11,
              t_min_fraction: float = 2.0 ** -10, n_panels: int = 8, gl_order: int = 4,
              center: Optional[Sequence[float]] = None, eps_tail: float = 1e-4) -> 'GridSpec':
        """Build a grid from scalar settings (the experiment configuration's grid block)."""
        if not horizon > 0.0:
            raise DomainError(f"Horizon {horizon} must be positive")
        if n_times < 2:
            raise DomainError(f"Need at least two time nodes, got {n_times}")
        resolution = int(round(2.0 * half_width / spacing))
        box = BoxSpec.centered(params.d, half_width, resolution, center)
        nodes = interior_grid(domain, box)
        times = horizon * np.geomspace(t_min_fraction, 1.0, n_times)
        tail = profile_for(params).mass_outside(horizon, half_width)
        if tail > eps_tail:
            logger.warning(f"Tail mass {tail:.2e} of p({horizon}, .) outside radius "
                           f"{half_width} exceeds {eps_tail:.0e}")
        settings = {'half_width': half_width, 'spacing': spacing, 'horizon': horizon,
                    'n_times': n_times, 't_min_fraction': t_min_fraction,
                    'n_panels': n_panels, 'gl_order': gl_order,
                    'center': None if center is None else list(center)}
        logger.debug(f"Grid: {len(nodes)} nodes, {n_times} times up to {horizon}, "
                     f"tail mass {tail:.2e}")
        return cls(params=params, domain=domain, box=box, nodes=nodes, times=times,
                   n_panels=n_panels, gl_order=gl_order, tail_mass=tail,
                   eps_tail=eps_tail, settings=settings)

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def spacing(self) -> float:
        return float(self.box.spacing[0])

    @property
    def points(self) -> np.ndarray:
        return self.nodes.points

    @property
    def weights(self) -> np.ndarray:
        return self.nodes.weights

    @property
    def resolved_time(self) -> float:
        """Smallest t with t (pi/h)^alpha >= 10: the lattice resolves p(t, .) there."""
        return 10.0 * (self.spacing / math.pi) ** self.params.alpha

    def resolved_times(self) -> np.ndarray:
        """Mask of time nodes the lattice resolves (the last node always counts)."""
        mask = self.times >= self.resolved_time
        mask[-1] = True
        return mask

    def time_rule(self, t: float) -> Tuple[np.ndarray, np.ndarray]:
        return graded_time_rule(t, self.params.alpha, self.n_panels, self.gl_order)

    def refined(self, what: str = 'time') -> 'GridSpec':
        """Same grid with doubled time rule ('time') or halved spacing ('space')."""
        settings = dict(self.settings)
        if what == 'time':
            return replace(self, n_panels=2 * self.n_panels,
                           settings={**settings, 'n_panels': 2 * self.n_panels})
        if what == 'space':
            settings['spacing'] = settings['spacing'] / 2.0
            return GridSpec.build(self.params, self.domain, **settings, eps_tail=self.eps_tail)
        raise DomainError(f"Unknown refinement '{what}'")

    def node_index(self, point: Sequence[float]) -> int:
        """Index of the node nearest to a point."""
        diff = self.points - np.asarray(point, dtype=float)
        return int(np.argmin(np.einsum('ij,ij->i', diff, diff)))

    def interior_mask(self, margin: float) -> np.ndarray:
        """Nodes at least margin away from every face of the box."""
        lower = np.asarray(self.box.lower) + margin
        upper = np.asarray(self.box.upper) - margin
        return np.all((self.points >= lower) & (self.points <= upper), axis=1)

    def diagnostic_mask(self, base_values: np.ndarray, floor: float = 1e-8,
                        margin_fraction: float = 1.0 / 3.0) -> np.ndarray:
        """
        (time, node) pairs used for ratios against a base kernel: resolved
        times, nodes away from the box faces, base above floor * its maximum.
        """
        interior = self.interior_mask(margin_fraction * self.settings['half_width'])
        above = base_values > floor * base_values.max(axis=1, keepdims=True)
        return above & interior[None, :] & self.resolved_times()[:, None]

    def describe(self) -> dict:
        return {**self.settings, 'n_nodes': len(self.nodes), 'tail_mass': self.tail_mass,
                'domain': self.domain.to_dict()}


class SpectralLattice:
    """
    Convolutions with the free kernel on the zero-padded box lattice.

    The kernel enters through its exact symbol exp(-t|xi|^alpha) sampled at
    the lattice frequencies, which keeps unit mass at every t and resolves
    the small-time limit as a band-limited delta. Node arrays are scattered
    with their covered cell fractions before convolving and read back at the
    node's cell.
    """

    def __init__(self, grid: GridSpec):
        self.grid = grid
        self.n = grid.box.resolution
        self.m = 2 * self.n
        d = grid.params.d
        h = grid.box.spacing
        freqs = [2.0 * math.pi * np.fft.fftfreq(self.m, d=h[k]) for k in range(d - 1)]
        freqs.append(2.0 * math.pi * np.fft.rfftfreq(self.m, d=h[-1]))
        self.xi = np.meshgrid(*freqs, indexing='ij')
        self.xi_norm = np.sqrt(sum(x ** 2 for x in self.xi))
        self.cell = float(np.prod(h))
        self._fractions = grid.nodes.weights / self.cell
        self._offsets = self._offset_vectors(h)

    def _offset_vectors(self, h: np.ndarray) -> np.ndarray:
        """Displacements of the padded lattice in wrap-around order, shape (m,)*d + (d,)."""
        axes = [np.where(np.arange(self.m) < self.n, np.arange(self.m),
                         np.arange(self.m) - self.m) * h[k] for k in range(len(h))]
        return np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1)

    def symbol(self, t: float) -> np.ndarray:
        return np.exp(-t * self.xi_norm ** self.grid.params.alpha)

    def _pad(self, node_values: np.ndarray) -> np.ndarray:
        lattice = self.grid.nodes.scatter(node_values * self._fractions)
        padded = np.zeros((self.m,) * self.grid.params.d)
        padded[(slice(0, self.n),) * self.grid.params.d] = lattice
        return padded

    def _gather(self, padded: np.ndarray) -> np.ndarray:
        return self.grid.nodes.gather(padded[(slice(0, self.n),) * self.grid.params.d])

    def _back(self, spectrum: np.ndarray) -> np.ndarray:
        shape = (self.m,) * self.grid.params.d
        return self._gather(np.fft.irfftn(spectrum, s=shape))

    def forward(self, node_values: np.ndarray) -> np.ndarray:
        return np.fft.rfftn(self._pad(node_values))

    def convolve(self, t: float, node_values: np.ndarray) -> np.ndarray:
        """sum_z p(t, x - z) f(z) w_z at every node x."""
        return self._back(self.symbol(t) * self.forward(node_values))

    def convolve_gradient(self, t: float, node_values: np.ndarray) -> np.ndarray:
        """sum_z grad p(t, x - z) f(z) w_z, shape (n_nodes, d)."""
        return self.convolve_with_gradient(t, node_values)[1]

    def convolve_with_gradient(self, t: float,
                               node_values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """convolve and convolve_gradient from a single forward transform."""
        spec = self.symbol(t) * self.forward(node_values)
        grads = np.stack([self._back(1j * xi * spec) for xi in self.xi], axis=-1)
        return self._back(spec), grads

    def convolve_divergence(self, t: float, vector_values: np.ndarray) -> np.ndarray:
        """sum_z sum_c d_c p(t, x - z) F_c(z) w_z for a vector field F at the nodes."""
        sym = self.symbol(t)
        total = sum(1j * xi * sym * self.forward(vector_values[:, c])
                    for c, xi in enumerate(self.xi))
        return self._back(total)

    def convolve_sampled(self, kernel_of_offsets, node_values: np.ndarray) -> np.ndarray:
        """sum_z k(x - z) f(z) w_z for a kernel given by its values at lattice displacements."""
        kernel = kernel_of_offsets(self._offsets) * self.cell
        return self._back(np.fft.rfftn(kernel) * self.forward(node_values))

    def fractional_laplacian(self, node_values: np.ndarray) -> np.ndarray:
        """Delta^(alpha/2) f at the nodes through the multiplier -|xi|^alpha."""
        return self._back(-self.xi_norm ** self.grid.params.alpha * self.forward(node_values))
