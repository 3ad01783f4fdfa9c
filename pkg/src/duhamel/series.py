"""
Picard iteration for the drift-perturbed kernel,

    p_k(t, x, y) = int_0^t int_D p_{k-1}(t-s, x, z) b(z) . grad_z p0(s, z, y) dz ds   (direct)
                 = int_0^t int_D p0(t-s, x, z) b(z) . grad_z p_{k-1}(s, z, y) dz ds   (adjoint)

and its sum p^b = sum_k p_k.

Target-anchored fields (y fixed) are advanced with the adjoint recursion,
which also yields grad_x p_k since x enters only through p0(t-s, x, z).
Source-anchored fields (x fixed) are advanced with the direct recursion.
Spatial integrals are spectral convolutions on the grid lattice; the inner
s-integral uses the graded Gauss-Legendre rule of the grid.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy.interpolate import PchipInterpolator

from src.analysis.kato import DriftField
from src.data.models import CheckReport, Rule
from src.duhamel.field import KernelField
from src.duhamel.grid import GridSpec, SpectralLattice
from src.duhamel.sources import BaseKernel, tabulate_base_kernel
from src.errors import (ContractError, ConvergenceQualityError, DomainError, NonContractionError,
                        NumericError)

logger = logging.getLogger(__name__)

DEFAULT_SLACK = 0.2
# relative cut-off on p0 below which nodes are left out of contraction ratios
FAR_FIELD_FLOOR = 1e-12


class DuhamelOperator:
    """
    The integral operators of the series for one base field and one drift.

    Attributes:
        base: tabulated p0 with the anchor as target
        kernel: the base kernel behind the field
        drift_values: b at the grid nodes, shape (n_nodes, d)
    """

    def __init__(self, base: KernelField, drift: DriftField, workers: int = 1):
        if base.kernel is None:
            raise ContractError("Base field carries no kernel; tabulate it with tabulate_base_kernel")
        self.base = base
        self.kernel: BaseKernel = base.kernel
        self.grid: GridSpec = base.grid
        self.lattice = SpectralLattice(self.grid)
        self.drift_values = drift(self.grid.points)
        self.drift_norm = np.linalg.norm(self.drift_values, axis=1)
        self.drift_is_zero = not np.any(self.drift_norm > 0.0)
        self.workers = workers
        index = base.anchor_index
        self._delta = np.zeros(len(self.grid.nodes))
        self._delta[index] = 1.0 / self.grid.weights[index]

    def _weight(self, t: float) -> Tuple[np.ndarray, np.ndarray]:
        return self.kernel.weight(t, self.grid.points)

    def _anchor_weight(self, t: float) -> float:
        return float(self.kernel.weight(t, self.base.anchor[None, :])[0][0])

    def base_at(self, s: float) -> Tuple[np.ndarray, np.ndarray]:
        """
        p0(s, z, anchor) and grad_z p0(s, z, anchor) over the nodes, with the
        free factor taken band-limited from the lattice.
        """
        w, gw = self._weight(s)
        wa = self._anchor_weight(s)
        conv, grad = self.lattice.convolve_with_gradient(s, self._delta)
        return wa * w * conv, wa * (gw * conv[:, None] + w[:, None] * grad)

    def _prev_at(self, prev: KernelField, s: float) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        if prev.kernel is self.kernel and prev.anchor_index == self.base.anchor_index:
            return self.base_at(s)
        return prev.at_time(s)

    def _check_finite(self, values: np.ndarray, t: float) -> None:
        bad = ~np.isfinite(values)
        if bad.any():
            j = int(np.flatnonzero(bad.reshape(len(values), -1).any(axis=1))[0])
            raise NumericError(f"Non-finite Duhamel integrand at t={t:g}",
                               node=(float(t), *self.grid.points[j].tolist()))

    def propagate(self, t: float, gradient_at) -> Tuple[np.ndarray, np.ndarray]:
        """
        int_0^t P0_{t-s}(b . g(s)) ds and its x-gradient over the nodes, where
        gradient_at(s) returns the node gradients g(s).
        """
        n, d = len(self.grid.nodes), self.grid.params.d
        values, grads = np.zeros(n), np.zeros((n, d))
        if self.drift_is_zero:
            return values, grads
        for s, ws in zip(*self.grid.time_rule(t)):
            g = np.einsum('ij,ij->i', self.drift_values, gradient_at(s))
            w, gw = self._weight(t - s)
            conv, conv_grad = self.lattice.convolve_with_gradient(t - s, w * g)
            values += ws * w * conv
            grads += ws * (gw * conv[:, None] + w[:, None] * conv_grad)
        self._check_finite(values, t)
        self._check_finite(grads, t)
        return values, grads

    def adjoint_at(self, t: float, prev: KernelField) -> Tuple[np.ndarray, np.ndarray]:
        """Values and x-gradients of the adjoint integral at output time t."""
        return self.propagate(t, lambda s: self._prev_at(prev, s)[1])

    def free_semigroup_at(self, t: float, f_values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """P0_t f over the nodes and its gradient."""
        w, gw = self._weight(t)
        conv, grad = self.lattice.convolve_with_gradient(t, w * f_values)
        return w * conv, gw * conv[:, None] + w[:, None] * grad

    def direct_at(self, t: float, prev: KernelField) -> np.ndarray:
        """Values of the direct integral over y at output time t, for the source anchor."""
        values = np.zeros(len(self.grid.nodes))
        if self.drift_is_zero:
            return values
        for s, ws in zip(*self.grid.time_rule(t)):
            prev_values, _ = self._prev_at(prev, t - s)
            flux = prev_values[:, None] * self.drift_values
            w, gw = self._weight(s)
            term = (self.lattice.convolve(s, np.einsum('ij,ij->i', flux, gw))
                    - self.lattice.convolve_divergence(s, w[:, None] * flux))
            values += ws * w * term
        self._check_finite(values, t)
        return values

    def _map_times(self, func, prev: KernelField) -> List[Any]:
        return Parallel(n_jobs=self.workers)(delayed(func)(t, prev) for t in self.grid.times)

    def adjoint_step(self, prev: KernelField) -> KernelField:
        if prev.role != 'target':
            raise ContractError("The adjoint recursion needs a target-anchored field")
        if not prev.has_gradients:
            raise ContractError(f"Field '{prev.label}' carries no gradients")
        results = self._map_times(self.adjoint_at, prev)
        k = prev.order + 1
        return KernelField(grid=self.grid, values=np.stack([r[0] for r in results]),
                           anchor_index=self.base.anchor_index,
                           gradients=np.stack([r[1] for r in results]), role='target',
                           order=k, signed=True, label=f'p{k}', kernel=None,
                           meta={'recursion': 'adjoint'})

    def direct_step(self, prev: KernelField) -> KernelField:
        if prev.role != 'source':
            raise ContractError("The direct recursion needs a source-anchored field")
        values = np.stack(self._map_times(self.direct_at, prev))
        k = prev.order + 1
        return KernelField(grid=self.grid, values=values, anchor_index=self.base.anchor_index,
                           gradients=None, role='source', order=k, signed=True,
                           label=f'p{k}', kernel=None, meta={'recursion': 'direct'})

    @property
    def resolution_time(self) -> float:
        """Times below (2h)^alpha are treated as point masses in contraction estimates."""
        return (2.0 * self.grid.spacing) ** self.grid.params.alpha

    def _local_gradient_mass(self, s: float) -> float:
        """int |grad_z p0(s, z, anchor)| dz with the mass concentrated at the anchor."""
        w, gw = self.kernel.weight(s, self.base.anchor[None, :])
        return float(w[0] ** 2 * self.kernel.profile.gradient_l1_norm(s)
                     + w[0] * np.linalg.norm(gw[0]))

    def _gradient_magnitude(self, s: float) -> np.ndarray:
        """|b(z)| |grad_z p0(s, z, anchor)| over the nodes, from the exact profile."""
        grads = self.kernel.gradients(s, self.grid.points, self.base.anchor)
        return self.drift_norm * np.linalg.norm(grads, axis=1)

    def _ratio_max(self, numerator: np.ndarray, t: float, what: str,
                   scale: Optional[np.ndarray] = None) -> float:
        p_t = self.kernel.values(t, self.grid.points, self.base.anchor)
        interior = self.grid.interior_mask(self.grid.settings.get('half_width', 0.0) / 3.0)
        keep = interior & (p_t > FAR_FIELD_FLOOR * p_t.max())
        excluded = int((~keep).sum())
        if excluded:
            logger.warning(f"{what}: {excluded} far-field or edge nodes excluded at t={t:g}")
        ratio = numerator[keep] / p_t[keep]
        if scale is not None:
            ratio = ratio * scale[keep]
        return float(ratio.max(initial=0.0))

    def contraction_estimate(self, t: float) -> float:
        """
        max_x int_0^t int p0(t-s,x,z) |b(z)| |grad_z p0(s,z,y)| dz ds / p0(t,x,y)
        for the anchor y.
        """
        if self.drift_is_zero:
            return 0.0
        s_res = self.resolution_time
        anchor_b = float(self.drift_norm[self.base.anchor_index])
        total = np.zeros(len(self.grid.nodes))
        for s, ws in zip(*self.grid.time_rule(t)):
            tau = t - s
            if s < s_res:
                near = self.kernel.values(tau, self.grid.points, self.base.anchor)
                total += ws * near * anchor_b * self._local_gradient_mass(s)
                continue
            w, _ = self._weight(tau)
            total += ws * w * self.lattice.convolve(tau, w * self._gradient_magnitude(s))
        return self._ratio_max(total, t, 'contraction_estimate')

    def gradient_contraction_estimate(self, t: float) -> float:
        """
        max_x (rho(x) ^ t^(1/alpha)) int_0^t int |grad_x p0(t-s,x,z)| |b(z)|
        |grad_z p0(s,z,y)| dz ds / p0(t,x,y), bounded through the separable form.
        """
        if self.drift_is_zero:
            return 0.0
        s_res = self.resolution_time
        anchor_b = float(self.drift_norm[self.base.anchor_index])
        total = np.zeros(len(self.grid.nodes))
        for s, ws in zip(*self.grid.time_rule(t)):
            tau = t - s
            w, gw = self._weight(tau)
            gw_norm = np.linalg.norm(gw, axis=1)
            if s < s_res:
                grad_near = self.kernel.gradients(tau, self.grid.points, self.base.anchor)
                total += ws * np.linalg.norm(grad_near, axis=1) * anchor_b * self._local_gradient_mass(s)
                continue
            source = w * self._gradient_magnitude(s)
            if tau < s_res:
                local = self.kernel.profile.gradient_l1_norm(tau)
                total += ws * (w * local + gw_norm) * source
                continue
            spread = self.lattice.convolve_sampled(
                lambda off: np.linalg.norm(self.kernel.profile.gradient(tau, off), axis=-1), source)
            total += ws * (gw_norm * self.lattice.convolve(tau, source) + w * spread)
        rho = self.kernel.domain.distance(self.grid.points)
        scale = np.minimum(rho, t ** (1.0 / self.grid.params.alpha))
        return self._ratio_max(total, t, 'gradient_contraction_estimate', scale=scale)


def _check_grid(base: KernelField, grid: Optional[GridSpec]) -> None:
    if grid is not None and grid is not base.grid:
        raise ContractError("Base field was tabulated on a different grid")


def picard_step_adjoint(base: KernelField, prev: KernelField, b: DriftField,
                        grid: Optional[GridSpec] = None, workers: int = 1) -> KernelField:
    """
    p_k from p_{k-1} by the adjoint recursion, with gradients in x.

    Raises:
        ContractError: prev has no gradients or lives on another grid
        NumericError: the integrand is not finite at some node
    """
    _check_grid(base, grid)
    if prev.grid is not base.grid:
        raise ContractError("Base and previous field live on different grids")
    return DuhamelOperator(base, b, workers).adjoint_step(prev)


def picard_step(base: KernelField, prev: KernelField, b: DriftField,
                grid: Optional[GridSpec] = None, workers: int = 1) -> KernelField:
    """
    p_k from p_{k-1} by the direct recursion for a source-anchored field.

    A symmetric base passed as prev is switched to the source role.
    """
    _check_grid(base, grid)
    if prev.grid is not base.grid:
        raise ContractError("Base and previous field live on different grids")
    if prev.role == 'target':
        prev = prev.with_role('source')
    return DuhamelOperator(base, b, workers).direct_step(prev)


def contraction_estimate(base: KernelField, b: DriftField, grid: Optional[GridSpec] = None,
                         t: Optional[float] = None) -> float:
    """C_emp(t) for the anchor of the base field; t defaults to the grid horizon."""
    _check_grid(base, grid)
    t = base.grid.horizon if t is None else t
    if t > base.grid.horizon * (1.0 + 1e-12):
        raise ContractError(f"t={t:g} exceeds the grid horizon {base.grid.horizon:g}")
    return DuhamelOperator(base, b).contraction_estimate(t)


def gradient_contraction_estimate(base: KernelField, b: DriftField,
                                  grid: Optional[GridSpec] = None,
                                  t: Optional[float] = None) -> float:
    """C^(t): the weighted gradient analogue of contraction_estimate."""
    _check_grid(base, grid)
    t = base.grid.horizon if t is None else t
    return DuhamelOperator(base, b).gradient_contraction_estimate(t)


def contraction_horizon(base: KernelField, b: DriftField, target: float = 0.25,
                        max_halvings: int = 30) -> Tuple[float, float]:
    """Largest t = horizon / 2^j with C_emp(t) < target, and that C_emp."""
    op = DuhamelOperator(base, b)
    t = base.grid.horizon
    for _ in range(max_halvings):
        c = op.contraction_estimate(t)
        if c < target:
            return t, c
        t /= 2.0
    raise NonContractionError(op.contraction_estimate(base.grid.horizon), base.grid.horizon, t)


@dataclass
class SeriesDiagnostics:
    """
    Convergence record of sum_series.

    Attributes:
        ratios: r_k = sup |p_k| / p0 over the diagnostic nodes, k = 1..K
        c_emp: contraction estimate at the horizon
        c_hat: gradient contraction estimate at the horizon
        truncation_index: K
        min_ratio, max_ratio: extremes of p^b / p0 over the diagnostic nodes
    """
    ratios: List[float]
    c_emp: float
    c_hat: float
    horizon: float
    truncation_index: int
    tol: float
    slack: float = DEFAULT_SLACK
    min_ratio: float = 1.0
    max_ratio: float = 1.0
    tail_mass: float = 0.0
    gradient_constant: Optional[float] = None
    gradient_noise: Optional[float] = None
    excluded_nodes: int = 0
    extra: Dict[str, Any] = field(default_factory=dict)

    @property
    def residual_bound(self) -> float:
        if not self.ratios:
            return 0.0
        if self.c_emp >= 1.0:
            return math.inf
        return self.ratios[-1] * self.c_emp / (1.0 - self.c_emp)

    @property
    def decay_ratios(self) -> List[float]:
        return [b / a for a, b in zip(self.ratios[:-1], self.ratios[1:]) if a > 0.0]

    @property
    def geometric_decay_ok(self) -> bool:
        """r_{k+1}/r_k <= C_emp (1 + slack) for every computed k."""
        return all(q <= self.c_emp * (1.0 + self.slack) for q in self.decay_ratios)

    @property
    def domination_ok(self) -> bool:
        """r_k <= (C_emp (1 + slack))^k for every computed k."""
        level = self.c_emp * (1.0 + self.slack)
        return all(r <= level ** k for k, r in enumerate(self.ratios, start=1))

    @property
    def sandwich_ok(self) -> bool:
        """(1 - C/(1-C)) p0 <= p^b <= (1 + C/(1-C)) p0 up to slack."""
        if self.c_emp >= 1.0:
            return False
        width = self.c_emp / (1.0 - self.c_emp)
        return (self.min_ratio >= (1.0 - width) * (1.0 - self.slack)
                and self.max_ratio <= (1.0 + width) * (1.0 + self.slack))

    @property
    def positivity_ok(self) -> bool:
        """For C_emp < 1/4 the sum stays above (2/3)(1 - slack) p0."""
        if self.c_emp >= 0.25:
            return self.min_ratio > 0.0
        return self.min_ratio >= 2.0 / 3.0 * (1.0 - self.slack)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data.update(residual_bound=self.residual_bound, decay_ratios=self.decay_ratios,
                    geometric_decay_ok=self.geometric_decay_ok,
                    domination_ok=self.domination_ok, sandwich_ok=self.sandwich_ok,
                    positivity_ok=self.positivity_ok)
        return data

    def to_json(self, path: str) -> None:
        with open(path, 'w') as f:
            json.dump(self.to_dict(), f, indent=2, default=float)


def _suggest_horizon(op: DuhamelOperator, horizon: float, max_halvings: int = 20) -> float:
    t = horizon
    for _ in range(max_halvings):
        t /= 2.0
        if op.contraction_estimate(t) < 1.0:
            return t
    return t


def _sup_ratio(term: KernelField, base: KernelField, mask: np.ndarray) -> float:
    return float(np.max(np.abs(term.values[mask]) / base.values[mask], initial=0.0))


def _weighted_gradient_constant(series: KernelField, base: KernelField, mask: np.ndarray) -> float:
    """max |grad_x p^b| (rho ^ t^(1/alpha)) / p0 over the diagnostic nodes."""
    grid = base.grid
    rho = base.kernel.domain.distance(grid.points)
    scale = np.minimum(rho[None, :], grid.times[:, None] ** (1.0 / grid.params.alpha))
    ratio = np.linalg.norm(series.gradients, axis=2) * scale / base.values
    return float(ratio[mask].max(initial=0.0))


def sum_series(base: KernelField, b: DriftField, grid: Optional[GridSpec] = None,
               k_max: int = 6, tol: float = 1e-4, slack: float = DEFAULT_SLACK,
               workers: int = 1) -> Tuple[KernelField, SeriesDiagnostics]:
    """
    Sum the Picard series for the anchor of the base field.

    Terms are added until r_K / (1 - C_emp) < tol or K = k_max. The result
    carries x-gradients (the gradient series).

    Raises:
        NonContractionError: C_emp at the horizon is at least 1
        ConvergenceQualityError: the sum drops below -slack * p0 somewhere
    """
    _check_grid(base, grid)
    if base.role != 'target' or not base.has_gradients:
        raise ContractError("sum_series needs a target-anchored base field with gradients")
    grid = base.grid
    mask = grid.diagnostic_mask(base.values)
    noise = base.meta.get('gradient_noise')
    if b.is_zero:
        diagnostics = SeriesDiagnostics(ratios=[], c_emp=0.0, c_hat=0.0, horizon=grid.horizon,
                                        truncation_index=0, tol=tol, slack=slack,
                                        tail_mass=grid.tail_mass, gradient_noise=noise,
                                        gradient_constant=base.meta.get('gradient_constant'))
        return base, diagnostics

    op = DuhamelOperator(base, b, workers)
    c_emp = op.contraction_estimate(grid.horizon)
    if c_emp >= 1.0:
        raise NonContractionError(c_emp, grid.horizon, _suggest_horizon(op, grid.horizon))
    c_hat = op.gradient_contraction_estimate(grid.horizon)
    logger.info(f"Series for anchor {base.anchor.tolist()}: C_emp={c_emp:.4f}, C^={c_hat:.4f}")

    total_values = base.values.copy()
    total_grads = base.gradients.copy()
    ratios: List[float] = []
    prev = base
    for k in range(1, k_max + 1):
        term = op.adjoint_step(prev)
        total_values += term.values
        total_grads += term.gradients
        ratios.append(_sup_ratio(term, base, mask))
        logger.info(f"  p_{k}: sup |p_k|/p0 = {ratios[-1]:.3e}")
        prev = term
        if ratios[-1] / (1.0 - c_emp) < tol:
            break

    series = KernelField(grid=grid, values=total_values, anchor_index=base.anchor_index,
                         gradients=total_grads, role='target', order=0, signed=True,
                         label=f'p^b[{b.description}]', kernel=None,
                         meta={'source': base.meta.get('source'), 'terms': len(ratios)})
    relative = total_values[mask] / base.values[mask]
    min_ratio = float(relative.min()) if relative.size else 1.0
    if min_ratio < -slack:
        raise ConvergenceQualityError(f"Partial sum reaches {min_ratio:.3f} * p0 "
                                      f"(allowed -{slack}) after {len(ratios)} terms")
    gradient_constant = _weighted_gradient_constant(series, base, mask)
    series.meta['gradient_constant'] = gradient_constant
    diagnostics = SeriesDiagnostics(
        ratios=ratios, c_emp=c_emp, c_hat=c_hat, horizon=grid.horizon,
        truncation_index=len(ratios), tol=tol, slack=slack, min_ratio=min_ratio,
        max_ratio=float(relative.max()) if relative.size else 1.0, tail_mass=grid.tail_mass,
        gradient_constant=gradient_constant, gradient_noise=noise,
        excluded_nodes=int((~mask).sum()))
    if not diagnostics.geometric_decay_ok:
        logger.warning(f"Term ratios {np.round(diagnostics.decay_ratios, 4).tolist()} exceed "
                       f"C_emp (1 + {slack}) = {c_emp * (1 + slack):.4f}")
    return series, diagnostics


def gradient_series(base: KernelField, b: DriftField, grid: Optional[GridSpec] = None,
                    k_max: int = 6, tol: float = 1e-4, slack: float = DEFAULT_SLACK,
                    workers: int = 1) -> KernelField:
    """grad_x p^b as a field whose values are |grad_x p^b| and gradients the vectors."""
    series, diagnostics = sum_series(base, b, grid, k_max, tol, slack, workers)
    magnitude = np.linalg.norm(series.gradients, axis=2)
    meta = {'gradient_constant': diagnostics.gradient_constant, 'c_hat': diagnostics.c_hat}
    return KernelField(grid=series.grid, values=magnitude, anchor_index=series.anchor_index,
                       gradients=series.gradients, role='target', order=0, signed=False,
                       label=f'grad {series.label}', meta=meta)


def dual_duhamel_check(base: KernelField, series: KernelField, b: DriftField,
                       grid: Optional[GridSpec] = None, tolerance: float = 0.05,
                       workers: int = 1) -> CheckReport:
    """
    Compare p^b with p0 + int int p0(t-s,x,z) b(z) . grad_z p^b(s,z,y) dz ds.

    The right side splits p^b into p0 and the remainder sum_{k>=1} p_k,
    which vanishes like t at small times.
    """
    _check_grid(base, grid)
    if not series.has_gradients:
        raise ContractError("The dual Duhamel check needs the gradients of the series")
    grid = base.grid
    op = DuhamelOperator(base, b, workers)
    remainder = (series - base).with_order(1)
    rhs = base.values + op.adjoint_step(base).values + op.adjoint_step(remainder).values
    mask = grid.diagnostic_mask(base.values)
    lhs = series.values
    deviation = np.abs(lhs - rhs)[mask] / np.abs(lhs[mask])
    worst = int(np.argmax(deviation)) if deviation.size else 0
    ti, xi = np.argwhere(mask)[worst] if deviation.size else (0, 0)
    return CheckReport(
        check_id='dual_duhamel', provenance='series',
        statistic=float(deviation.max(initial=0.0)), tolerance=tolerance, rule=Rule.AT_MOST,
        n_samples=int(mask.sum()), lhs_max=float(lhs[mask].max(initial=0.0)),
        rhs_max=float(rhs[mask].max(initial=0.0)),
        argmax_sample={'t': float(grid.times[ti]), 'x': grid.points[xi].tolist(),
                       'y': base.anchor.tolist()},
        params=grid.params.to_dict(), inputs={'drift': b.description, 'grid': grid.describe()})


def compare_recursions(kernel: BaseKernel, b: DriftField, grid: GridSpec,
                       anchors: Sequence[Sequence[float]], k_max: int = 3,
                       tolerance: float = 0.05, workers: int = 1) -> CheckReport:
    """
    Direct against adjoint recursion on the matrix p_k(t, a, a') over anchor pairs.

    The statistic is the largest max_{pairs} |direct - adjoint| relative to
    max |adjoint| over k = 1..k_max at the resolved times.
    """
    bases = [tabulate_base_kernel(kernel, grid, a) for a in anchors]
    index = [base.anchor_index for base in bases]
    times = grid.resolved_times()
    adjoint = {j: [] for j in range(len(bases))}
    direct = {i: [] for i in range(len(bases))}
    for j, base in enumerate(bases):
        op = DuhamelOperator(base, b, workers)
        prev_a, prev_d = base, base.with_role('source')
        for _ in range(k_max):
            prev_a = op.adjoint_step(prev_a)
            prev_d = op.direct_step(prev_d)
            adjoint[j].append(prev_a.values[:, index])
            direct[j].append(prev_d.values[:, index])
    deviations = []
    for k in range(k_max):
        # adjoint[j] holds p_k(t, a_i, a_j) over i; direct[i] holds p_k(t, a_i, a_j) over j
        adj = np.stack([adjoint[j][k] for j in range(len(bases))], axis=2)[times]
        dirc = np.stack([direct[i][k] for i in range(len(bases))], axis=1)[times]
        scale = np.abs(adj).max()
        deviations.append(float(np.abs(adj - dirc).max() / scale) if scale > 0.0 else 0.0)
    logger.info(f"Direct vs adjoint relative deviation by order: {np.round(deviations, 5).tolist()}")
    return CheckReport(check_id='recursion_agreement', provenance='series',
                       statistic=max(deviations), tolerance=tolerance, rule=Rule.AT_MOST,
                       n_samples=len(anchors) ** 2 * k_max,
                       params=grid.params.to_dict(),
                       inputs={'drift': b.description, 'anchors': [list(a) for a in anchors]},
                       details={'deviation_by_order': deviations})


def sum_source_series(base: KernelField, b: DriftField, n_terms: int,
                      workers: int = 1) -> KernelField:
    """
    p^b(t, anchor, .) as a source-anchored field: p0 plus n_terms terms of
    the direct recursion.
    """
    if not base.meta.get('symmetric', False):
        raise ContractError("The source series starts from a symmetric base field")
    source = base.with_role('source')
    if b.is_zero or n_terms < 1:
        return source
    op = DuhamelOperator(base, b, workers)
    total = source.values.copy()
    prev = source
    for _ in range(n_terms):
        prev = op.direct_step(prev)
        total += prev.values
    return KernelField(grid=base.grid, values=total, anchor_index=base.anchor_index,
                       gradients=None, role='source', order=0, signed=True,
                       label=f'p^b[{b.description}] (source)',
                       meta={'source': base.meta.get('source'), 'terms': n_terms})


class SemigroupSeries:
    """
    P^b_t f over the grid nodes for a function f given by its node values:

        u_0(t) = P0_t f,   u_k(t) = int_0^t P0_{t-s}(b . grad u_{k-1}(s)) ds,

    P^b_t f = sum_k u_k(t). Terms below the last are tabulated on the grid
    times; at(t) evaluates the sum at any t up to the horizon.
    """

    def __init__(self, op: DuhamelOperator, f_values: np.ndarray, n_terms: int = 3):
        self.op = op
        self.f_values = np.asarray(f_values, dtype=float)
        self.n_terms = 0 if op.drift_is_zero else n_terms
        self.times = op.grid.times
        self._tables: List[PchipInterpolator] = []
        for k in range(1, self.n_terms):
            grads = np.stack([op.propagate(t, self._gradient_of(k - 1))[1] for t in self.times])
            self._tables.append(PchipInterpolator(np.log(self.times), grads, axis=0))
        logger.debug(f"Semigroup series with {self.n_terms} drift terms tabulated")

    def _gradient_of(self, k: int):
        if k == 0:
            return lambda s: self.op.free_semigroup_at(s, self.f_values)[1]
        table = self._tables[k - 1]
        t0 = self.times[0]

        def gradient_at(s: float) -> np.ndarray:
            if s < t0:
                return table(np.log(t0)) * (s / t0) ** k
            return table(np.log(s))
        return gradient_at

    def at(self, t: float) -> np.ndarray:
        """P^b_t f at the nodes."""
        if t > self.op.grid.horizon * (1.0 + 1e-12):
            raise DomainError(f"t={t:g} exceeds the grid horizon {self.op.grid.horizon:g}")
        values = self.op.free_semigroup_at(t, self.f_values)[0]
        for k in range(1, self.n_terms + 1):
            values = values + self.op.propagate(t, self._gradient_of(k - 1))[0]
        return values

    def integral(self, t: float) -> np.ndarray:
        """int_0^t P^b_s f ds at the nodes, on the grid's inner time rule."""
        total = np.zeros(len(self.f_values))
        for s, ws in zip(*self.op.grid.time_rule(t)):
            total += ws * self.at(s)
        return total
