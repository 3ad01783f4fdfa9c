"""
Open sets D (half-space, ball, or all of R^d), the distance to the
complement, and cell-centred quadrature grids on D.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.errors import DomainError, EmptyGridError

logger = logging.getLogger(__name__)

KINDS = ('half_space', 'ball', 'whole_space')


@dataclass(frozen=True)
class Domain:
    """
    Half-space {x : normal . x > offset}, ball B(center, radius) or R^d.

    theta is the C^{1,theta} smoothness index (1 for every supported kind);
    characteristics (r0, Lambda) are carried as metadata only.
    """
    kind: str
    dim: int
    normal: Optional[Tuple[float, ...]] = None
    offset: float = 0.0
    center: Optional[Tuple[float, ...]] = None
    radius: Optional[float] = None
    theta: float = 1.0
    characteristics: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        """Validate the geometry after initialization."""
        if self.kind not in KINDS:
            raise DomainError(f"Unknown domain kind '{self.kind}'")
        if self.dim < 1:
            raise DomainError(f"Dimension {self.dim} must be positive")
        if not (0.0 < self.theta <= 1.0):
            raise DomainError(f"Smoothness index theta={self.theta} outside (0, 1]")
        if self.kind == 'half_space':
            if self.normal is None or len(self.normal) != self.dim:
                raise DomainError("Half-space needs a normal with dim coordinates")
            n = np.asarray(self.normal, dtype=float)
            norm = float(np.linalg.norm(n))
            if norm == 0.0:
                raise DomainError("Half-space normal must be non-zero")
            object.__setattr__(self, 'normal', tuple(float(v) for v in n / norm))
        if self.kind == 'ball':
            if self.center is None or len(self.center) != self.dim:
                raise DomainError("Ball needs a center with dim coordinates")
            if self.radius is None or self.radius <= 0:
                raise DomainError(f"Ball radius {self.radius} must be positive")
            object.__setattr__(self, 'center', tuple(float(v) for v in self.center))

    @classmethod
    def half_space(cls, normal: Sequence[float], offset: float = 0.0, **kwargs) -> 'Domain':
        return cls(kind='half_space', dim=len(normal), normal=tuple(normal), offset=offset, **kwargs)

    @classmethod
    def ball(cls, center: Sequence[float], radius: float, **kwargs) -> 'Domain':
        return cls(kind='ball', dim=len(center), center=tuple(center), radius=radius, **kwargs)

    @classmethod
    def whole_space(cls, dim: int) -> 'Domain':
        return cls(kind='whole_space', dim=dim)

    @property
    def is_whole_space(self) -> bool:
        return self.kind == 'whole_space'

    @property
    def is_bounded(self) -> bool:
        return self.kind == 'ball'

    def admissible_for(self, alpha: float) -> bool:
        """Smoothness pairing theta > alpha/2."""
        return self.theta > alpha / 2.0

    def distance(self, x) -> np.ndarray:
        """Vectorised rho(x) for points of shape (..., dim)."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise DomainError(f"Point has {x.shape[-1]} coordinates, expected {self.dim}")
        if self.kind == 'whole_space':
            return np.full(x.shape[:-1], np.inf)
        if self.kind == 'half_space':
            return np.maximum(x @ np.asarray(self.normal) - self.offset, 0.0)
        r = np.linalg.norm(x - np.asarray(self.center), axis=-1)
        return np.maximum(self.radius - r, 0.0)

    def signed_distance(self, x) -> np.ndarray:
        """Distance to the boundary, negative outside D."""
        x = np.asarray(x, dtype=float)
        if self.kind == 'whole_space':
            return np.full(x.shape[:-1], np.inf)
        if self.kind == 'half_space':
            return x @ np.asarray(self.normal) - self.offset
        return self.radius - np.linalg.norm(x - np.asarray(self.center), axis=-1)

    def contains(self, x) -> np.ndarray:
        return self.distance(x) > 0.0

    def distance_gradient(self, x) -> np.ndarray:
        """grad rho(x) inside D (unit inward direction to the nearest boundary point)."""
        x = np.asarray(x, dtype=float)
        if self.kind == 'whole_space':
            return np.zeros_like(x)
        if self.kind == 'half_space':
            return np.broadcast_to(np.asarray(self.normal), x.shape).copy()
        diff = x - np.asarray(self.center)
        r = np.linalg.norm(diff, axis=-1, keepdims=True)
        return -diff / np.where(r > 0.0, r, 1.0)

    def sample(self, rng: np.random.Generator, n: int, box: 'BoxSpec',
               boundary_fraction: float = 0.2, boundary_width: float = 0.05) -> np.ndarray:
        """
        Points in D inside the box: uniform, except a boundary_fraction share
        drawn with rho uniform in (0, boundary_width).
        """
        lower, upper = np.asarray(box.lower), np.asarray(box.upper)
        n_boundary = 0 if self.is_whole_space else int(round(boundary_fraction * n))
        out: List[np.ndarray] = []
        need = n - n_boundary
        while need > 0:
            cand = rng.uniform(lower, upper, size=(max(2 * need, 16), self.dim))
            cand = cand[self.contains(cand)]
            out.append(cand[:need])
            need -= len(out[-1])
        if n_boundary:
            out.append(self._boundary_layer_sample(rng, n_boundary, lower, upper, boundary_width))
        return np.concatenate(out, axis=0)

    def _boundary_layer_sample(self, rng, n, lower, upper, width) -> np.ndarray:
        rho = rng.uniform(0.0, width, size=n)
        rho = np.maximum(rho, 1e-6 * width)
        if self.kind == 'ball':
            direction = rng.standard_normal((n, self.dim))
            direction /= np.linalg.norm(direction, axis=-1, keepdims=True)
            return np.asarray(self.center) + (self.radius - rho)[:, None] * direction
        normal = np.asarray(self.normal)
        base = rng.uniform(lower, upper, size=(n, self.dim))
        base -= ((base @ normal) - self.offset)[:, None] * normal
        return base + rho[:, None] * normal

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {'kind': self.kind, 'dim': self.dim, 'theta': self.theta}
        if self.kind == 'half_space':
            data.update(normal=list(self.normal), offset=self.offset)
        if self.kind == 'ball':
            data.update(center=list(self.center), radius=self.radius)
        if self.characteristics is not None:
            data['characteristics'] = list(self.characteristics)
        return data

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]], dim: int) -> 'Domain':
        if data is None:
            return cls.whole_space(dim)
        data = dict(data)
        kind = data.pop('kind')
        chars = data.pop('characteristics', None)
        data.pop('dim', None)
        if kind == 'whole_space':
            return cls.whole_space(dim)
        if kind == 'half_space':
            return cls.half_space(tuple(data['normal']), float(data.get('offset', 0.0)),
                                  theta=float(data.get('theta', 1.0)),
                                  characteristics=tuple(chars) if chars else None)
        if kind == 'ball':
            return cls.ball(tuple(data['center']), float(data['radius']),
                            theta=float(data.get('theta', 1.0)),
                            characteristics=tuple(chars) if chars else None)
        raise DomainError(f"Unknown domain kind '{kind}'")


def dist_to_complement(domain: Domain, x) -> float:
    """Euclidean distance from x to the complement of D (0 outside D)."""
    return float(domain.distance(np.asarray(x, dtype=float)))


@dataclass(frozen=True)
class BoxSpec:
    """Axis-aligned bounding box with a cell count per axis."""
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    resolution: int

    def __post_init__(self):
        if len(self.lower) != len(self.upper):
            raise DomainError("Box corners differ in dimension")
        if any(hi <= lo for lo, hi in zip(self.lower, self.upper)):
            raise DomainError("Box upper corner must exceed the lower corner")
        if self.resolution < 2:
            raise DomainError(f"Resolution {self.resolution} must be at least 2 per axis")

    @classmethod
    def centered(cls, dim: int, half_width: float, resolution: int,
                 center: Optional[Sequence[float]] = None) -> 'BoxSpec':
        c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
        return cls(tuple(c - half_width), tuple(c + half_width), resolution)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def spacing(self) -> np.ndarray:
        return (np.asarray(self.upper) - np.asarray(self.lower)) / self.resolution

    def axes(self) -> List[np.ndarray]:
        return [lo + (np.arange(self.resolution) + 0.5) * h
                for lo, h in zip(self.lower, self.spacing)]

    @property
    def volume(self) -> float:
        return float(np.prod(np.asarray(self.upper) - np.asarray(self.lower)))


@dataclass
class InteriorGrid:
    """
    Quadrature nodes of D inside a box.

    Attributes:
        points: (n, dim) representative points, all with rho > 0
        weights: (n,) cell measures of cell intersected with D
        index: (n, dim) lattice multi-indices of the cells
        box: the bounding box and resolution
        fractions: lattice-shaped array of covered cell fractions
    """
    points: np.ndarray
    weights: np.ndarray
    index: np.ndarray
    box: BoxSpec
    fractions: np.ndarray
    rho: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def spacing(self) -> np.ndarray:
        return self.box.spacing

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.box.resolution,) * self.box.dim

    def __len__(self) -> int:
        return len(self.weights)

    def scatter(self, values: np.ndarray) -> np.ndarray:
        """Place per-node values (n, ...) onto the full lattice (zeros off D)."""
        values = np.asarray(values)
        out = np.zeros(self.shape + values.shape[1:], dtype=values.dtype)
        out[tuple(self.index.T)] = values
        return out

    def gather(self, lattice: np.ndarray) -> np.ndarray:
        """Read lattice-shaped values back at the grid nodes."""
        return lattice[tuple(self.index.T)]

    def boundary_layer(self) -> np.ndarray:
        """Mask of nodes with rho in [h/10, h]."""
        h = float(np.min(self.spacing))
        return (self.rho >= h / 10.0 - 1e-15) & (self.rho <= h)


def _clip_polygon(poly: List[Tuple[float, float]], normal: np.ndarray, offset: float):
    """Sutherland-Hodgman clip of a convex polygon against normal . x >= offset."""
    out = []
    for k, cur in enumerate(poly):
        prev = poly[k - 1]
        fc = normal @ np.asarray(cur) - offset
        fp = normal @ np.asarray(prev) - offset
        if fc >= 0.0:
            if fp < 0.0:
                lam = fp / (fp - fc)
                out.append(tuple(np.asarray(prev) + lam * (np.asarray(cur) - np.asarray(prev))))
            out.append(cur)
        elif fp >= 0.0:
            lam = fp / (fp - fc)
            out.append(tuple(np.asarray(prev) + lam * (np.asarray(cur) - np.asarray(prev))))
    return out


def _polygon_area_centroid(poly) -> Tuple[float, np.ndarray]:
    pts = np.asarray(poly, dtype=float)
    x, y = pts[:, 0], pts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    if abs(area) < 1e-300:
        return 0.0, pts.mean(axis=0)
    cx = ((x + xn) * cross).sum() / (6.0 * area)
    cy = ((y + yn) * cross).sum() / (6.0 * area)
    return abs(area), np.array([cx, cy])


def _cut_cell(domain: Domain, center: np.ndarray, h: np.ndarray,
              subcells: int) -> Tuple[float, np.ndarray]:
    """Covered measure and centroid of one cell intersected with D."""
    if domain.kind == 'half_space' and domain.dim == 2:
        lo, hi = center - h / 2, center + h / 2
        square = [(lo[0], lo[1]), (hi[0], lo[1]), (hi[0], hi[1]), (lo[0], hi[1])]
        clipped = _clip_polygon(square, np.asarray(domain.normal), domain.offset)
        if len(clipped) < 3:
            return 0.0, center
        return _polygon_area_centroid(clipped)
    if domain.kind == 'half_space':
        normal = np.asarray(domain.normal)
        axis = np.flatnonzero(np.abs(normal) == 1.0)
        if axis.size == 1:
            a = int(axis[0])
            sign = normal[a]
            lo, hi = center[a] - h[a] / 2, center[a] + h[a] / 2
            if sign > 0:
                seg_lo, seg_hi = max(lo, domain.offset), hi
            else:
                seg_lo, seg_hi = lo, min(hi, -domain.offset)
            length = max(seg_hi - seg_lo, 0.0)
            centroid = center.copy()
            centroid[a] = 0.5 * (seg_lo + seg_hi)
            return length / h[a] * float(np.prod(h)), centroid
    offsets = (np.arange(subcells) + 0.5) / subcells - 0.5
    sub = np.stack(np.meshgrid(*([offsets] * domain.dim), indexing='ij'), axis=-1).reshape(-1, domain.dim)
    sub = center + sub * h
    inside = domain.contains(sub)
    if not inside.any():
        return 0.0, center
    return inside.mean() * float(np.prod(h)), sub[inside].mean(axis=0)


def interior_grid(domain: Domain, box: BoxSpec, subcells: int = 8) -> InteriorGrid:
    """
    Cell-centred quadrature grid of D within the box.

    Cells fully inside D keep their centre and full measure. Cells cut by the
    boundary keep the covered measure and are represented by the centroid of
    the covered part, moved inward so that rho >= h/10.

    Raises:
        EmptyGridError: the box does not meet D
    """
    if box.dim != domain.dim:
        raise DomainError(f"Box dimension {box.dim} differs from domain dimension {domain.dim}")
    axes = box.axes()
    h = box.spacing
    hmin = float(h.min())
    mesh = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1)
    cell_volume = float(np.prod(h))
    half_diag = 0.5 * float(np.linalg.norm(h))

    signed = domain.signed_distance(mesh)
    fractions = np.zeros(mesh.shape[:-1])
    reps = mesh.copy()
    fractions[signed >= half_diag] = 1.0

    # cells whose centre lies within half a diagonal of the boundary
    for idx in np.argwhere(np.abs(signed) < half_diag):
        idx = tuple(idx)
        measure, centroid = _cut_cell(domain, mesh[idx], h, subcells)
        if measure <= 0.0:
            continue
        fractions[idx] = min(measure / cell_volume, 1.0)
        reps[idx] = centroid

    keep = np.argwhere(fractions > 0.0)
    if len(keep) == 0:
        raise EmptyGridError(f"Box {box.lower}..{box.upper} does not intersect the {domain.kind}")
    points = reps[tuple(keep.T)]
    weights = fractions[tuple(keep.T)] * cell_volume

    if not domain.is_whole_space:
        rho = domain.distance(points)
        floor = hmin / 10.0
        short = rho < floor
        if short.any():
            grad = domain.distance_gradient(points[short])
            points[short] += (floor - rho[short])[:, None] * grad
        rho = domain.distance(points)
    else:
        rho = np.full(len(points), np.inf)

    logger.debug(f"Interior grid on {domain.kind}: {len(points)} nodes, "
                 f"{int((fractions[tuple(keep.T)] < 1.0).sum())} cut cells, h={hmin:g}")
    return InteriorGrid(points=points, weights=weights, index=keep, box=box,
                        fractions=fractions, rho=rho)
