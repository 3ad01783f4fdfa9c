"""
KernelField: a kernel tabulated at the grid's time nodes and spatial nodes
for one anchor point.

A 'target' field holds k(t, x, y) as a function of x for the fixed target
y = anchor, with gradients in x. A 'source' field holds k(t, x, y) as a
function of y for the fixed source x = anchor.

On-disk layout (little-endian): one UTF-8 JSON header line, then the values
as float64 in row-major (n_times, n_nodes) order, then, when present, the
gradients as float64 in row-major (n_times, n_nodes, d) order.
"""

import json
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.interpolate import PchipInterpolator, RegularGridInterpolator

from src.duhamel.grid import GridSpec
from src.errors import ContractError, DomainError, ManifestError

logger = logging.getLogger(__name__)

ROLES = ('target', 'source')
FORMAT = 'kernel-field/1'


@dataclass
class KernelField:
    """
    Tabulated kernel with values (n_times, n_nodes) and optional gradients
    (n_times, n_nodes, d) on a shared grid.

    order is the power of t used to continue the field below the first time
    node (p_k behaves like t^k there); order 0 marks fields that must not be
    extrapolated.
    """
    grid: GridSpec
    values: np.ndarray
    anchor_index: int
    gradients: Optional[np.ndarray] = None
    role: str = 'target'
    order: int = 0
    signed: bool = False
    label: str = 'p0'
    kernel: Any = None
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        """Validate shapes and sign after initialization."""
        if self.role not in ROLES:
            raise ContractError(f"Unknown field role '{self.role}'")
        n_t, n_nodes = len(self.grid.times), len(self.grid.nodes)
        if self.values.shape != (n_t, n_nodes):
            raise ContractError(f"Values have shape {self.values.shape}, grid needs {(n_t, n_nodes)}")
        if self.gradients is not None and self.gradients.shape != (n_t, n_nodes, self.grid.params.d):
            raise ContractError(f"Gradients have shape {self.gradients.shape}")
        if not self.signed and self.values.min() < 0.0:
            raise ContractError(f"Field '{self.label}' is flagged non-negative but has "
                                f"minimum {self.values.min():.3e}")

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    @property
    def anchor(self) -> np.ndarray:
        return self.grid.points[self.anchor_index]

    @property
    def has_gradients(self) -> bool:
        return self.gradients is not None

    @cached_property
    def _value_interp(self) -> PchipInterpolator:
        return PchipInterpolator(np.log(self.times), self.values, axis=0)

    @cached_property
    def _gradient_interp(self) -> PchipInterpolator:
        return PchipInterpolator(np.log(self.times), self.gradients, axis=0)

    def _scale_below(self, s: float) -> float:
        if self.order < 1:
            raise DomainError(f"Field '{self.label}' is not defined below t={self.times[0]:g} (s={s:g})")
        return (s / self.times[0]) ** self.order

    def at_time(self, s: float) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        """
        Node values (and gradients) at time s.

        Stored rows are returned unchanged at the time nodes; in between the
        field is interpolated monotonically in log t; below the first node it
        is continued by (s/t_0)^order.
        """
        times = self.times
        if s > times[-1] * (1.0 + 1e-12):
            raise DomainError(f"Time {s:g} beyond the last node {times[-1]:g}")
        hit = np.flatnonzero(times == s)
        if hit.size:
            i = int(hit[0])
            return self.values[i], (self.gradients[i] if self.has_gradients else None)
        if s < times[0]:
            scale = self._scale_below(s)
            grads = self.gradients[0] * scale if self.has_gradients else None
            return self.values[0] * scale, grads
        log_s = np.log(s)
        grads = self._gradient_interp(log_s) if self.has_gradients else None
        return self._value_interp(log_s), grads

    def time_index(self, t: float) -> int:
        """Index of a stored time node (exact match within 1e-12 relative)."""
        hit = np.flatnonzero(np.isclose(self.times, t, rtol=1e-12, atol=0.0))
        if not hit.size:
            raise DomainError(f"t={t:g} is not a time node of the grid")
        return int(hit[0])

    def value_at(self, t: float, x) -> float:
        """Kernel value at (t, x): time interpolation then multilinear in space."""
        x = np.asarray(x, dtype=float)
        values, _ = self.at_time(t)
        diff = self.grid.points - x
        nearest = int(np.argmin(np.einsum('ij,ij->i', diff, diff)))
        if np.allclose(self.grid.points[nearest], x, rtol=0.0, atol=1e-12):
            return float(values[nearest])
        lattice = self.grid.nodes.scatter(values)
        interp = RegularGridInterpolator(tuple(self.grid.box.axes()), lattice, method='linear',
                                         bounds_error=False, fill_value=0.0)
        return float(interp(x[None, :])[0])

    def _compatible(self, other: 'KernelField') -> None:
        if other.grid is not self.grid:
            raise ContractError("Fields live on different grids")
        if other.anchor_index != self.anchor_index or other.role != self.role:
            raise ContractError("Fields have different anchors or roles")

    def __add__(self, other: 'KernelField') -> 'KernelField':
        self._compatible(other)
        grads = None
        if self.has_gradients and other.has_gradients:
            grads = self.gradients + other.gradients
        return KernelField(grid=self.grid, values=self.values + other.values,
                           anchor_index=self.anchor_index, gradients=grads, role=self.role,
                           order=min(self.order, other.order), signed=True,
                           label=f"{self.label}+{other.label}")

    def __sub__(self, other: 'KernelField') -> 'KernelField':
        return self + other.scaled(-1.0)

    def scaled(self, factor: float) -> 'KernelField':
        grads = self.gradients * factor if self.has_gradients else None
        return KernelField(grid=self.grid, values=self.values * factor,
                           anchor_index=self.anchor_index, gradients=grads, role=self.role,
                           order=self.order, signed=self.signed or factor < 0,
                           label=f"{factor:g}*{self.label}")

    def with_order(self, order: int) -> 'KernelField':
        return KernelField(grid=self.grid, values=self.values, anchor_index=self.anchor_index,
                           gradients=self.gradients, role=self.role, order=order,
                           signed=self.signed, label=self.label, kernel=self.kernel,
                           meta=dict(self.meta))

    def with_role(self, role: str) -> 'KernelField':
        """Reinterpret a symmetric base field with the anchor as source instead of target."""
        if not self.meta.get('symmetric', False):
            raise ContractError(f"Field '{self.label}' is not symmetric; its role is fixed")
        return KernelField(grid=self.grid, values=self.values, anchor_index=self.anchor_index,
                           gradients=self.gradients if role == 'target' else None, role=role,
                           order=self.order, signed=self.signed, label=self.label,
                           kernel=self.kernel, meta=dict(self.meta))

    def header(self) -> Dict[str, Any]:
        return {
            'format': FORMAT,
            'label': self.label,
            'role': self.role,
            'anchor_index': self.anchor_index,
            'anchor': self.anchor.tolist(),
            'order': self.order,
            'signed': self.signed,
            'times': self.times.tolist(),
            'n_nodes': len(self.grid.nodes),
            'dim': self.grid.params.d,
            'has_gradients': self.has_gradients,
            'grid': self.grid.describe(),
            'meta': {k: v for k, v in self.meta.items() if isinstance(v, (int, float, str, bool))},
        }

    def save(self, path: str) -> None:
        """Write the header line followed by the raw arrays."""
        with open(path, 'wb') as f:
            f.write((json.dumps(self.header(), sort_keys=True) + '\n').encode('utf-8'))
            f.write(np.ascontiguousarray(self.values, dtype='<f8').tobytes())
            if self.has_gradients:
                f.write(np.ascontiguousarray(self.gradients, dtype='<f8').tobytes())

    @classmethod
    def load(cls, path: str, grid: GridSpec) -> 'KernelField':
        """Read a field written by save() onto the grid it was built on."""
        try:
            with open(path, 'rb') as f:
                header = json.loads(f.readline().decode('utf-8'))
                payload = f.read()
        except (OSError, ValueError) as e:
            raise ManifestError(f"Cannot read kernel field {path}: {e}")
        if header.get('format') != FORMAT:
            raise ManifestError(f"{path} is not a kernel field file")
        n_t, n_nodes, d = len(header['times']), header['n_nodes'], header['dim']
        if n_nodes != len(grid.nodes) or n_t != len(grid.times):
            raise ContractError(f"{path} was written on a different grid")
        data = np.frombuffer(payload, dtype='<f8')
        values = data[:n_t * n_nodes].reshape(n_t, n_nodes).copy()
        grads = None
        if header['has_gradients']:
            grads = data[n_t * n_nodes:].reshape(n_t, n_nodes, d).copy()
        return cls(grid=grid, values=values, anchor_index=header['anchor_index'], gradients=grads,
                   role=header['role'], order=header['order'], signed=header['signed'],
                   label=header['label'], meta=header.get('meta', {}))

    def to_frame(self) -> pd.DataFrame:
        """Tidy table with one row per (time, node)."""
        n_t, n_nodes = self.values.shape
        d = self.grid.params.d
        data: Dict[str, np.ndarray] = {'t': np.repeat(self.times, n_nodes)}
        points = np.tile(self.grid.points, (n_t, 1))
        for k in range(d):
            data[f'x{k}'] = points[:, k]
        data['value'] = self.values.ravel()
        if self.has_gradients:
            for k in range(d):
                data[f'grad{k}'] = self.gradients[:, :, k].ravel()
        return pd.DataFrame(data)

    def to_csv(self, path: str) -> None:
        self.to_frame().to_csv(path, index=False)
        logger.debug(f"Wrote field '{self.label}' ({self.values.size} rows) to {path}")
