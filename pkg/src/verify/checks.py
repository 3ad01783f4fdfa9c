"""
Checks binding the series and Monte Carlo outputs to the claimed properties
of the killed drift kernel p^{b,D}.

Each check returns a CheckReport (or a list of them). Checks never raise on
a failed inequality: the verdict is carried by the report.
"""

import logging
import math
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.analysis.constant_fit import refinement_stable
from src.analysis.kato import DriftField, co_vanishing, constant_drift_modulus, kato_modulus
from src.data.models import CheckReport, Rule
from src.duhamel.field import KernelField
from src.duhamel.series import (DuhamelOperator, SemigroupSeries, SeriesDiagnostics,
                                contraction_horizon)
from src.errors import ContractError, NonContractionError
from src.geometry.domain import Domain
from src.montecarlo.paths import DensityEstimate
from src.stable.kernel import (DEFAULT_QUAD, _quad, eval_free_kernel,
                               free_kernel_fourier_bessel, levy_constant)
from src.stable.laplacian import frac_laplacian_apply
from src.stable.params import QuadratureConfig, StableParams, TestFunction
from src.stable.profile import profile_for

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 0.05
WHOLE_SPACE_SPREAD = 100.0
DIRICHLET_SPREAD = 200.0
MC_CI_FACTOR = 3.0
REFINEMENT_SLACK = 1.5
# rays pass next to the poles of singular drifts
CATALOG_QUAD = QuadratureConfig(rel_tol=1e-6, abs_tol=1e-12, limit=400)
KATO_CLOSED_FORM_TOLERANCE = 1e-6


def _sphere_area(d: int) -> float:
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def _relative(lhs, rhs) -> np.ndarray:
    lhs, rhs = np.asarray(lhs, dtype=float), np.asarray(rhs, dtype=float)
    return np.abs(lhs - rhs) / np.maximum(np.abs(rhs), 1e-300)


# free kernel

def check_free_normalization(params: StableParams, quad: QuadratureConfig = DEFAULT_QUAD,
                             tolerance: float = 1e-3, cutoff: float = 50.0) -> CheckReport:
    """int p(1, x) dx = 1: radial quadrature to the cutoff plus the c r^(-d-alpha) tail."""
    d, alpha = params.d, params.alpha
    body = _quad(lambda r: eval_free_kernel(params, 1.0, r, quad) * r ** (d - 1),
                 0.0, cutoff, quad, 'normalization', points=[0.5, 1.0, 2.0, 5.0, 10.0])
    tail = levy_constant(params) * cutoff ** (-alpha) / alpha
    mass = _sphere_area(d) * (body + tail)
    logger.info(f"Free kernel mass {mass:.8f} (tail {_sphere_area(d) * tail:.2e})")
    return CheckReport(check_id='free_normalization', provenance='quadrature',
                       statistic=abs(mass - 1.0), tolerance=tolerance, rule=Rule.AT_MOST,
                       lhs_max=mass, rhs_max=1.0, params=params.to_dict(),
                       inputs={'cutoff': cutoff}, details={'mass': mass})


def check_free_scaling(params: StableParams, quad: QuadratureConfig = DEFAULT_QUAD,
                       samples: Sequence[Tuple[float, float]] = ((0.25, 0.4), (0.5, 1.3),
                                                                 (2.0, 0.7), (4.0, 3.0)),
                       tolerance: float = 1e-6) -> CheckReport:
    """p(t, r) = t^(-d/alpha) p(1, r t^(-1/alpha)) on a few (t, r) pairs."""
    lhs, rhs = [], []
    for t, r in samples:
        scale = t ** (1.0 / params.alpha)
        lhs.append(eval_free_kernel(params, t, r, quad))
        rhs.append(scale ** (-params.d) * eval_free_kernel(params, 1.0, r / scale, quad))
    deviation = _relative(lhs, rhs)
    worst = int(np.argmax(deviation))
    return CheckReport(check_id='free_scaling', provenance='quadrature',
                       statistic=float(deviation.max()), tolerance=tolerance, rule=Rule.AT_MOST,
                       n_samples=len(samples), lhs_max=max(lhs), rhs_max=max(rhs),
                       argmax_sample={'t': samples[worst][0], 'r': samples[worst][1]},
                       params=params.to_dict(),
                       details={'t': [s[0] for s in samples], 'r': [s[1] for s in samples],
                                'deviation': deviation.tolist()})


def check_free_fourier_bessel(params: StableParams, quad: QuadratureConfig = DEFAULT_QUAD,
                              radii: Sequence[float] = (0.0, 0.3, 1.0, 2.5),
                              tolerance: float = 1e-5) -> CheckReport:
    """Subordination formula against radial Fourier inversion at t = 1."""
    lhs = [eval_free_kernel(params, 1.0, r, quad) for r in radii]
    rhs = [free_kernel_fourier_bessel(params, 1.0, r) for r in radii]
    deviation = _relative(lhs, rhs)
    return CheckReport(check_id='free_fourier_bessel', provenance='quadrature',
                       statistic=float(deviation.max()), tolerance=tolerance, rule=Rule.AT_MOST,
                       n_samples=len(radii), lhs_max=max(lhs), rhs_max=max(rhs),
                       params=params.to_dict(),
                       details={'r': list(radii), 'deviation': deviation.tolist()})


# Kato class

def check_kato_closed_form(params: StableParams, radii: Sequence[float] = (0.1, 0.5, 1.0),
                           quad: QuadratureConfig = DEFAULT_QUAD,
                           tolerance: float = KATO_CLOSED_FORM_TOLERANCE) -> CheckReport:
    """K(r) for a unit constant drift on R^d against |S^(d-1)| r^(alpha-1)/(alpha-1)."""
    whole = Domain.whole_space(params.d)
    unit = np.zeros(params.d)
    unit[0] = 1.0
    drift = DriftField(lambda x: unit, whole, 1.0, 'constant')
    probes = np.zeros((1, params.d))
    lhs = [kato_modulus(params, drift, whole, r, quad, probes=probes) for r in radii]
    rhs = [constant_drift_modulus(params, r) for r in radii]
    deviation = _relative(lhs, rhs)
    return CheckReport(check_id='kato_closed_form', provenance='quadrature',
                       statistic=float(deviation.max()), tolerance=tolerance, rule=Rule.AT_MOST,
                       n_samples=len(radii), lhs_max=max(lhs), rhs_max=max(rhs),
                       params=params.to_dict(),
                       details={'r': list(radii), 'modulus': lhs, 'closed_form': rhs})


def check_kato_co_vanishing(params: StableParams, drift: DriftField, domain: Domain,
                            beta: Optional[float] = None, eps: float = 0.05, k_max: int = 4,
                            quad: QuadratureConfig = DEFAULT_QUAD,
                            expected: Optional[bool] = None) -> CheckReport:
    """
    The Kato modulus and the beta integral vanish together; with `expected`
    set, they must also vanish exactly when the drift is in the Kato class.
    """
    if beta is None:
        beta = 0.5 * (1.0 + (params.alpha - 1.0) / params.alpha)
    result = co_vanishing(params, drift, domain, beta, eps, k_max, quad=quad)
    agrees = expected is None or result['kato_vanishes'] == expected
    ok = result['consistent'] and agrees
    return CheckReport(check_id='kato_co_vanishing', provenance='quadrature',
                       statistic=1.0 if ok else 0.0, tolerance=1.0,
                       rule=Rule.AT_LEAST, n_samples=2 * k_max, params=params.to_dict(),
                       inputs={'drift': drift.description, 'beta': beta, 'eps': eps},
                       details={**result, 'expected': expected})


def check_kato_catalog(params: StableParams, domain: Domain, drifts: Sequence[DriftField],
                       expected: Sequence[Optional[bool]], beta: Optional[float] = None,
                       eps: float = 0.05, k_max: int = 4,
                       quad: QuadratureConfig = CATALOG_QUAD) -> CheckReport:
    """
    Co-vanishing over a list of drifts: the statistic counts the drifts whose
    two moduli disagree or whose verdict contradicts the expected class.
    """
    rows = []
    for drift, member in zip(drifts, expected):
        report = check_kato_co_vanishing(params, drift, domain, beta, eps, k_max, quad, member)
        rows.append({'drift': drift.description, 'parameters': drift.parameters,
                     'expected': member, 'kato_vanishes': report.details['kato_vanishes'],
                     'beta_vanishes': report.details['beta_vanishes'],
                     'kato_slope': report.details['kato_slope'],
                     'beta_slope': report.details['beta_slope'], 'passed': report.passed})
    failures = sum(not row['passed'] for row in rows)
    if failures:
        logger.warning(f"Kato catalog: {failures} of {len(rows)} drifts disagree")
    return CheckReport(check_id='kato_catalog', provenance='quadrature', statistic=float(failures),
                       tolerance=0.0, rule=Rule.AT_MOST, n_samples=len(rows),
                       params=params.to_dict(), inputs={'domain': domain.kind, 'eps': eps},
                       details={'drifts': rows})


# series

def check_series_domination(diagnostics: SeriesDiagnostics) -> CheckReport:
    """r_k <= (C_emp (1 + slack))^k, reported as max_k r_k^(1/k) / C_emp."""
    ratios = diagnostics.ratios
    if not ratios or diagnostics.c_emp == 0.0:
        statistic = 0.0
    else:
        statistic = max(r ** (1.0 / k) for k, r in enumerate(ratios, start=1)) / diagnostics.c_emp
    return CheckReport(check_id='series_domination', provenance='series',
                       statistic=statistic, tolerance=1.0 + diagnostics.slack, rule=Rule.AT_MOST,
                       n_samples=len(ratios), max_ratio=diagnostics.max_ratio,
                       min_ratio=diagnostics.min_ratio, excluded=diagnostics.excluded_nodes,
                       details=diagnostics.to_dict())


def check_series_sandwich(diagnostics: SeriesDiagnostics) -> CheckReport:
    """
    (1 - C/(1-C)) p0 <= p^b <= (1 + C/(1-C)) p0 up to slack, reported as the
    larger of max_ratio / upper and lower / min_ratio (at most one).
    """
    c, slack = diagnostics.c_emp, diagnostics.slack
    if c >= 1.0:
        statistic = math.inf
    else:
        width = c / (1.0 - c)
        upper = (1.0 + width) * (1.0 + slack)
        lower = (1.0 - width) * (1.0 - slack)
        below = lower / diagnostics.min_ratio if diagnostics.min_ratio > 0.0 else math.inf
        statistic = max(diagnostics.max_ratio / upper, below if lower > 0.0 else 0.0)
    return CheckReport(check_id='series_sandwich', provenance='series', statistic=statistic,
                       tolerance=1.0, rule=Rule.AT_MOST, n_samples=len(diagnostics.ratios),
                       max_ratio=diagnostics.max_ratio, min_ratio=diagnostics.min_ratio,
                       excluded=diagnostics.excluded_nodes,
                       details={'c_emp': c, 'slack': slack,
                                'sandwich_ok': diagnostics.sandwich_ok})


def check_series_positivity(diagnostics: SeriesDiagnostics) -> CheckReport:
    """min p^b / p0 against (2/3)(1 - slack) when C_emp < 1/4, else against zero."""
    if diagnostics.c_emp < 0.25:
        floor = 2.0 / 3.0 * (1.0 - diagnostics.slack)
    else:
        floor = float(np.finfo(float).tiny)
    return CheckReport(check_id='series_positivity', provenance='series',
                       statistic=diagnostics.min_ratio, tolerance=floor, rule=Rule.AT_LEAST,
                       n_samples=len(diagnostics.ratios), min_ratio=diagnostics.min_ratio,
                       excluded=diagnostics.excluded_nodes,
                       details={'c_emp': diagnostics.c_emp, 'slack': diagnostics.slack,
                                'positivity_ok': diagnostics.positivity_ok})


def check_contraction_horizon(base: KernelField, drift: DriftField,
                              target: float = 0.25) -> CheckReport:
    """A horizon horizon/2^j with C_emp < target exists."""
    try:
        horizon, c = contraction_horizon(base, drift, target)
    except NonContractionError as e:
        horizon, c = e.suggested_horizon, e.c_emp
        logger.warning(f"No contraction horizon found: {e}")
    return CheckReport(check_id='contraction_horizon', provenance='series', statistic=c,
                       tolerance=target, rule=Rule.AT_MOST, fitted_constant=c,
                       inputs={'drift': drift.description, 'anchor': base.anchor.tolist()},
                       details={'horizon': horizon, 'grid_horizon': base.grid.horizon})


def check_translation_oracle(series: KernelField, vector: Sequence[float],
                             times: Sequence[float] = (0.25, 0.5), tolerance: float = 0.05,
                             gradient_tolerance: float = 0.07) -> List[CheckReport]:
    """
    For a constant drift on R^d, p^b(t, x, y) = p(t, x - y + t b); values and
    x-gradients of the series are compared with the shifted free kernel.
    """
    grid = series.grid
    if not grid.domain.is_whole_space:
        raise ContractError("The translation oracle holds on the whole space only")
    profile = profile_for(grid.params)
    b = np.asarray(vector, dtype=float)
    wanted = [i for i, t in enumerate(grid.times)
              if any(np.isclose(t, s, rtol=1e-12) for s in times)]
    if not wanted:
        wanted = list(np.flatnonzero(grid.resolved_times()))
    interior = grid.interior_mask(grid.settings['half_width'] / 3.0)
    value_dev, grad_dev, samples = [], [], []
    for i in wanted:
        t = grid.times[i]
        shifted = grid.points - series.anchor + t * b
        exact = profile.kernel(t, shifted)
        keep = interior & (exact > 1e-8 * exact.max())
        value_dev.append(_relative(series.values[i][keep], exact[keep]))
        if series.has_gradients:
            exact_grad = profile.gradient(t, shifted)
            scale = np.linalg.norm(exact_grad, axis=1).max()
            grad_dev.append(np.linalg.norm(series.gradients[i][keep] - exact_grad[keep], axis=1) / scale)
        samples.append(float(t))
    values = np.concatenate(value_dev)
    common = {'params': grid.params.to_dict(),
              'inputs': {'vector': b.tolist(), 'anchor': series.anchor.tolist(), 'times': samples}}
    reports = [CheckReport(check_id='translation_oracle', provenance='series',
                           statistic=float(values.max()), tolerance=tolerance, rule=Rule.AT_MOST,
                           n_samples=len(values), **common)]
    if grad_dev:
        grads = np.concatenate(grad_dev)
        reports.append(CheckReport(check_id='translation_oracle_gradient', provenance='series',
                                   statistic=float(grads.max()), tolerance=gradient_tolerance,
                                   rule=Rule.AT_MOST, n_samples=len(grads), **common))
    return reports


def check_chapman_kolmogorov(targets: Sequence[KernelField], sources: Sequence[KernelField],
                             s: float, t: float, tolerance: float = DEFAULT_TOLERANCE,
                             provenance: str = 'series') -> CheckReport:
    """
    sum_z p(t-s, x_i, z) p(s, z, y_j) w_z against p(t, x_i, y_j) for every
    source anchor x_i and target anchor y_j.

    Raises:
        ContractError: no target/source pair, mixed grids or wrong roles
    """
    if not (0.0 < s < t):
        raise ContractError(f"Need 0 < s < t, got s={s:g}, t={t:g}")
    if not targets or not sources:
        raise ContractError("Chapman-Kolmogorov needs at least one target and one source field")
    grid = targets[0].grid
    if any(f.grid is not grid for f in (*targets, *sources)):
        raise ContractError("All fields must share one grid")
    if any(f.role != 'target' for f in targets) or any(f.role != 'source' for f in sources):
        raise ContractError("Fields passed with the wrong anchor role")
    lhs, rhs, pairs = [], [], []
    for src in sources:
        first, _ = src.at_time(t - s)
        for tgt in targets:
            second, _ = tgt.at_time(s)
            direct, _ = tgt.at_time(t)
            lhs.append(float(np.sum(first * second * grid.weights)))
            rhs.append(float(direct[src.anchor_index]))
            pairs.append((src.anchor.tolist(), tgt.anchor.tolist()))
    lhs_a, rhs_a = np.asarray(lhs), np.asarray(rhs)
    valid = rhs_a > 0.0
    deviation = _relative(lhs_a[valid], rhs_a[valid])
    if not deviation.size:
        raise ContractError("Every Chapman-Kolmogorov pair has a vanishing right side")
    worst = int(np.flatnonzero(valid)[np.argmax(deviation)])
    logger.info(f"Chapman-Kolmogorov s={s:g}, t={t:g}: max relative deviation {deviation.max():.3e}")
    return CheckReport(check_id='chapman_kolmogorov', provenance=provenance,
                       statistic=float(deviation.max()), tolerance=tolerance, rule=Rule.AT_MOST,
                       n_samples=len(lhs), lhs_max=float(lhs_a.max()), lhs_min=float(lhs_a.min()),
                       rhs_max=float(rhs_a.max()), rhs_min=float(rhs_a.min()),
                       argmax_sample={'x': pairs[worst][0], 'y': pairs[worst][1]},
                       excluded=int((~valid).sum()), params=grid.params.to_dict(),
                       inputs={'s': s, 't': t, 'n_targets': len(targets),
                               'n_sources': len(sources)})


def check_two_sided(kernel_values, envelope_values, bound: float,
                    check_id: str = 'two_sided', provenance: str = 'series',
                    samples: Optional[Sequence[Dict[str, Any]]] = None,
                    floor: float = 1e-300) -> CheckReport:
    """
    Ratio spread max(k / q) / min(k / q) of a kernel against its envelope.

    Samples with envelope below floor, or a non-positive kernel, are
    excluded and counted.
    """
    k = np.ravel(np.asarray(kernel_values, dtype=float))
    q = np.ravel(np.asarray(envelope_values, dtype=float))
    valid = (q > floor) & (k > 0.0) & np.isfinite(k)
    excluded = int((~valid).sum())
    if excluded:
        logger.warning(f"{check_id}: {excluded} of {len(k)} samples excluded")
    if not valid.any():
        return CheckReport(check_id=check_id, provenance=provenance, statistic=float('nan'),
                           tolerance=bound, rule=Rule.AT_MOST, n_samples=len(k), excluded=excluded)
    ratio = k[valid] / q[valid]
    idx = np.flatnonzero(valid)
    top, low = int(np.argmax(ratio)), int(np.argmin(ratio))
    spread = float(ratio[top] / ratio[low])
    return CheckReport(check_id=check_id, provenance=provenance, statistic=spread,
                       tolerance=bound, rule=Rule.AT_MOST, n_samples=len(k),
                       lhs_max=float(k[valid].max()), lhs_min=float(k[valid].min()),
                       rhs_max=float(q[valid].max()), rhs_min=float(q[valid].min()),
                       max_ratio=float(ratio[top]), min_ratio=float(ratio[low]),
                       argmax_sample=samples[idx[top]] if samples is not None else None,
                       fitted_constant=float(max(ratio[top], 1.0 / ratio[low])),
                       excluded=excluded)


def series_two_sided(series: KernelField, envelope: KernelField, bound: float,
                     provenance: str = 'series') -> CheckReport:
    """check_two_sided over the diagnostic nodes of a summed series."""
    grid = series.grid
    mask = grid.diagnostic_mask(envelope.values)
    ti, xi = np.nonzero(mask)
    samples = [{'t': float(grid.times[i]), 'x': grid.points[j].tolist(),
                'y': series.anchor.tolist()} for i, j in zip(ti, xi)]
    report = check_two_sided(series.values[mask], envelope.values[mask], bound,
                             provenance=provenance, samples=samples)
    report.params = grid.params.to_dict()
    report.inputs = {'anchor': series.anchor.tolist(), 'envelope': envelope.label}
    return report


def mc_two_sided(estimate: DensityEstimate, domain: Domain, envelope_at, bound: float,
                 layer: float = 0.0) -> CheckReport:
    """
    check_two_sided on the confident histogram cells: envelope_at(t, start,
    centers) gives q^D at the cell centres; cells within layer of the
    boundary are left out.
    """
    rho = domain.distance(estimate.centers)
    rows_k, rows_q, samples = [], [], []
    for i, t in enumerate(estimate.times):
        if t <= 0.0:
            continue
        keep = ~estimate.low_confidence[i] & (rho > layer)
        if not keep.any():
            continue
        rows_k.append(estimate.density[i, keep])
        rows_q.append(envelope_at(t, estimate.start, estimate.centers[keep]))
        samples.extend({'t': float(t), 'y': c.tolist()} for c in estimate.centers[keep])
    if not rows_k:
        return CheckReport(check_id='mc_two_sided', provenance='mc', statistic=float('nan'),
                           tolerance=bound, rule=Rule.AT_MOST, n_samples=0)
    report = check_two_sided(np.concatenate(rows_k), np.concatenate(rows_q), bound,
                             check_id='mc_two_sided', provenance='mc', samples=samples)
    report.inputs = {'start': estimate.start.tolist(), 'n_paths': estimate.n_paths}
    return report


def _weighted_gradient_ratios(series: KernelField, base: KernelField,
                              noise: Optional[float]) -> Tuple[np.ndarray, np.ndarray, int]:
    grid = base.grid
    mask = grid.diagnostic_mask(base.values)
    rho = grid.domain.distance(grid.points)
    scale = np.minimum(rho[None, :], grid.times[:, None] ** (1.0 / grid.params.alpha))
    magnitude = np.linalg.norm(series.gradients, axis=2)
    excluded = 0
    if noise:
        quiet = magnitude <= noise * np.abs(series.values)
        excluded = int((quiet & mask).sum())
        mask = mask & ~quiet
    ratio = np.where(mask, magnitude * scale / np.maximum(base.values, 1e-300), 0.0)
    return ratio, mask, excluded


def series_provenance(base: KernelField) -> str:
    return 'surrogate' if base.meta.get('provenance') == 'surrogate' else 'series'


def check_gradient_bound(series: KernelField, base: KernelField,
                         refined_series: KernelField, refined_base: KernelField,
                         slack: float = REFINEMENT_SLACK,
                         reference: Optional[float] = None) -> CheckReport:
    """
    Fitted C2 = max |grad_x p^b| (rho(x) ^ t^(1/alpha)) / p0 on the
    diagnostic nodes; passes when the refined grid changes C2 by less than
    the slack factor.
    """
    if not (series.has_gradients and refined_series.has_gradients):
        raise ContractError("The gradient bound needs series with gradients")
    noise = base.meta.get('gradient_noise')
    ratio, mask, excluded = _weighted_gradient_ratios(series, base, noise)
    fine_ratio, fine_mask, _ = _weighted_gradient_ratios(refined_series, refined_base, noise)
    coarse = float(ratio.max(initial=0.0))
    fine = float(fine_ratio.max(initial=0.0))
    spread = max(coarse, fine) / min(coarse, fine) if coarse > 0.0 and fine > 0.0 else float('inf')
    grid = base.grid
    per_time = [float(r[m].max(initial=0.0)) for r, m in zip(ratio, mask)]
    details = {'t': grid.times.tolist(), 'c2_by_time': per_time, 'coarse': coarse, 'fine': fine,
               'stable': refinement_stable(coarse, fine, slack)}
    if reference:
        details['relative_to_zero_drift'] = coarse / reference
    ti, xi = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
    return CheckReport(check_id='gradient_bound', provenance=series_provenance(base),
                       statistic=spread, tolerance=slack, rule=Rule.AT_MOST,
                       n_samples=int(mask.sum()), fitted_constant=coarse,
                       argmax_sample={'t': float(grid.times[ti]), 'x': grid.points[xi].tolist(),
                                      'y': base.anchor.tolist()},
                       excluded=excluded, params=grid.params.to_dict(),
                       inputs={'anchor': base.anchor.tolist(), 'gradient_noise': noise},
                       details=details)


# Harnack

def harnack_factor(params: StableParams, domain: Domain, x, y, T: float) -> np.ndarray:
    """(1 v rho(x)/rho(y))^(alpha/2) (1 v |x-y| / (T ^ 1)^(1/alpha))^(d+alpha)."""
    x, y = np.atleast_2d(x), np.atleast_2d(y)
    alpha, d = params.alpha, params.d
    distance = np.linalg.norm(x - y, axis=1)
    spatial = np.maximum(1.0, distance / min(T, 1.0) ** (1.0 / alpha)) ** (d + alpha)
    if domain.is_whole_space:
        return spatial
    boundary = np.maximum(1.0, domain.distance(x) / domain.distance(y)) ** (alpha / 2.0)
    return boundary * spatial


def check_harnack(values: np.ndarray, half_widths: np.ndarray, points: np.ndarray,
                  params: StableParams, domain: Domain, T: float,
                  refined_values: np.ndarray, slack: float = REFINEMENT_SLACK,
                  noise_factor: float = MC_CI_FACTOR) -> CheckReport:
    """
    P_T f(x) <= C factor(x, y) P_T f(y) over every ordered pair of points
    and every test function.

    values, half_widths: (n_functions, n_points) estimates of P_T f at the
    points and their 95% half-widths; refined_values repeats the estimate
    with more paths. Pairs with P_T f(y) below noise_factor half-widths are
    excluded.
    """
    n_f, n_p = values.shape
    lhs, rhs, fine_lhs, fine_rhs, samples = [], [], [], [], []
    excluded = 0
    for k in range(n_f):
        for i in range(n_p):
            for j in range(n_p):
                if values[k, j] <= noise_factor * half_widths[k, j]:
                    excluded += 1
                    continue
                factor = float(harnack_factor(params, domain, points[i], points[j], T)[0])
                lhs.append(values[k, i])
                rhs.append(factor * values[k, j])
                fine_lhs.append(refined_values[k, i])
                fine_rhs.append(factor * refined_values[k, j])
                samples.append({'f': k, 'x': points[i].tolist(), 'y': points[j].tolist(),
                                'factor': factor})
    if not lhs:
        return CheckReport(check_id='harnack', provenance='mc', statistic=float('nan'),
                           tolerance=slack, rule=Rule.AT_MOST, excluded=excluded)
    ratio = np.asarray(lhs) / np.asarray(rhs)
    fine = np.asarray(fine_lhs) / np.maximum(np.asarray(fine_rhs), 1e-300)
    c_coarse, c_fine = float(ratio.max()), float(fine.max())
    spread = max(c_coarse, c_fine) / min(c_coarse, c_fine) if c_fine > 0.0 else float('inf')
    best = int(np.argmax(ratio))
    swapped = _swap_constant(samples, ratio)
    logger.info(f"Harnack constant {c_coarse:.4g} (refined {c_fine:.4g}) over {len(ratio)} pairs")
    return CheckReport(check_id='harnack', provenance='mc', statistic=spread, tolerance=slack,
                       rule=Rule.AT_MOST, n_samples=len(ratio), lhs_max=float(max(lhs)),
                       rhs_max=float(max(rhs)), max_ratio=c_coarse, min_ratio=float(ratio.min()),
                       argmax_sample=samples[best], fitted_constant=c_coarse, excluded=excluded,
                       params=params.to_dict(), inputs={'T': T, 'n_functions': n_f,
                                                        'n_points': n_p},
                       details={'coarse': c_coarse, 'fine': c_fine, 'swapped_constant': swapped,
                                'binding_factor': samples[best]['factor']})


def _swap_constant(samples: List[Dict[str, Any]], ratio: np.ndarray) -> float:
    """Fitted constant over the pairs whose swapped pair was also kept."""
    index = {(s['f'], tuple(s['x']), tuple(s['y'])): r for s, r in zip(samples, ratio)}
    kept = [r for (f, x, y), r in index.items() if (f, y, x) in index]
    return float(max(kept)) if kept else float('nan')


# semigroup

def generator_values(op: DuhamelOperator, f: TestFunction) -> np.ndarray:
    """L f = Delta^(alpha/2) f + b . grad f at the nodes."""
    points = op.grid.points
    return (op.lattice.fractional_laplacian(f(points))
            + np.einsum('ij,ij->i', op.drift_values, f.gradient(points)))


def check_semigroup_side_conditions(op: DuhamelOperator, f: TestFunction,
                                    mass_field: Optional[KernelField] = None,
                                    provenance: str = 'series', n_terms: int = 3,
                                    tolerances: Optional[Dict[str, float]] = None,
                                    quad: QuadratureConfig = DEFAULT_QUAD,
                                    n_generator_probes: int = 3) -> List[CheckReport]:
    """
    Three reports for the semigroup of p^b:

      generator_identity  P_t f - f = int_0^t P_s L f ds at small resolved t
      mass                int p^b(t, x, .) <= 1 (= 1 on the whole space)
      strong_continuity   ||P_t f - f|| decreases along t = 2^-k, k = 1..6
    """
    tol = {'generator_identity': 1e-2, 'mass': 1e-3, 'strong_continuity': 0.0,
           **(tolerances or {})}
    grid = op.grid
    f_values = f(grid.points)
    sup_f = float(np.abs(f_values).max())
    if sup_f == 0.0:
        raise ContractError(f"Test function {f.name} vanishes on the grid")
    interior = grid.interior_mask(grid.settings['half_width'] / 3.0)
    semigroup = SemigroupSeries(op, f_values, n_terms)
    generator = generator_values(op, f)
    generator_series = SemigroupSeries(op, generator, n_terms)
    common = {'params': grid.params.to_dict(), 'inputs': {'f': f.name, 'center': list(f.center),
                                                          'radius': f.support_radius}}

    # exact on the lattice at every time node, resolved or not
    sample_times = grid.times[grid.times <= grid.horizon / 4.0][-3:]
    gaps = []
    for t in sample_times:
        lhs = semigroup.at(t) - f_values
        rhs = generator_series.integral(t)
        gaps.append(float(np.abs(lhs - rhs)[interior].max()) / sup_f)
    probes = [np.asarray(f.center, dtype=float)]
    probes += [np.asarray(f.center) + f.support_radius * np.eye(grid.params.d)[0] * s
               for s in (0.5, 1.5)][:max(n_generator_probes - 1, 0)]
    quadrature_gap = 0.0
    for x in probes:
        index = grid.node_index(x)
        exact = frac_laplacian_apply(grid.params, f, grid.points[index], quad)
        lattice = generator[index] - float(op.drift_values[index] @ f.gradient(grid.points[index]))
        quadrature_gap = max(quadrature_gap, abs(exact - lattice) / max(abs(exact), sup_f))
    reports = [CheckReport(check_id='generator_identity', provenance=provenance,
                           statistic=max(gaps), tolerance=tol['generator_identity'],
                           rule=Rule.AT_MOST, n_samples=len(sample_times) * int(interior.sum()),
                           details={'t': sample_times.tolist(), 'relative_gap': gaps,
                                    'generator_quadrature_gap': quadrature_gap}, **common)]

    if mass_field is not None:
        reports.append(_mass_report(mass_field, provenance, tol['mass'], common))

    ts = [2.0 ** -k for k in range(1, 7) if 2.0 ** -k <= grid.horizon * (1.0 + 1e-12)]
    norms = [float(np.abs(semigroup.at(t) - f_values)[interior].max()) for t in ts]
    increases = sum(1 for a, b in zip(norms[:-1], norms[1:]) if b > a * (1.0 + 1e-9))
    reports.append(CheckReport(check_id='strong_continuity', provenance=provenance,
                               statistic=float(increases), tolerance=tol['strong_continuity'],
                               rule=Rule.AT_MOST, n_samples=len(ts),
                               lhs_max=max(norms) if norms else None,
                               details={'t': ts, 'sup_distance': norms}, **common))
    return reports


def _mass_report(field: KernelField, provenance: str, tolerance: float,
                 common: Dict[str, Any]) -> CheckReport:
    """Mass of a source-anchored field at the resolved times."""
    if field.role != 'source':
        raise ContractError("The mass check needs a source-anchored field")
    grid = field.grid
    times = np.flatnonzero(grid.resolved_times())
    masses = []
    if grid.domain.is_whole_space:
        # lattice sum over the largest ball around x inside the box, analytic free tail outside
        radius = float(np.min(np.minimum(field.anchor - np.asarray(grid.box.lower),
                                         np.asarray(grid.box.upper) - field.anchor)))
        inside = np.linalg.norm(grid.points - field.anchor, axis=1) <= radius
        profile = profile_for(grid.params)
        for i in times:
            body = float(np.sum(field.values[i][inside] * grid.weights[inside]))
            masses.append(body + profile.mass_outside(grid.times[i], radius))
        statistic = max(abs(m - 1.0) for m in masses)
    else:
        for i in times:
            masses.append(float(np.sum(field.values[i] * grid.weights)))
        statistic = max(max(m - 1.0 for m in masses), 0.0)
    return CheckReport(check_id='mass', provenance=provenance, statistic=statistic,
                       tolerance=tolerance, rule=Rule.AT_MOST, n_samples=len(times),
                       lhs_max=max(masses), lhs_min=min(masses),
                       argmax_sample={'x': field.anchor.tolist()},
                       details={'t': grid.times[times].tolist(), 'mass': masses}, **common)


# Monte Carlo

def check_mc_free_density(estimate: DensityEstimate, params: StableParams,
                          tolerance: float = 0.05, ci_factor: float = MC_CI_FACTOR) -> CheckReport:
    """
    Whole-space histogram without drift against p(t, start, .): share of
    confident cells further than ci_factor half-widths from the exact kernel.
    """
    profile = profile_for(params)
    low, high = estimate.confidence_band
    outside, total = 0, 0
    worst = 0.0
    for i, t in enumerate(estimate.times):
        if t <= 0.0:
            continue
        keep = ~estimate.low_confidence[i]
        exact = profile.kernel(t, estimate.centers[keep] - estimate.start)
        half = 0.5 * (high[i, keep] - low[i, keep])
        gap = np.abs(estimate.density[i, keep] - exact) / np.maximum(ci_factor * half, 1e-300)
        outside += int((gap > 1.0).sum())
        total += int(keep.sum())
        worst = max(worst, float(gap.max(initial=0.0)))
    share = outside / total if total else float('nan')
    return CheckReport(check_id='mc_free_density', provenance='mc', statistic=share,
                       tolerance=tolerance, rule=Rule.AT_MOST, n_samples=total,
                       max_ratio=worst, params=params.to_dict(),
                       inputs={'start': estimate.start.tolist(), 'n_paths': estimate.n_paths},
                       details={'cells_outside': outside, 'ci_factor': ci_factor})


def check_cap_stability(frame: pd.DataFrame, ci_factor: float = MC_CI_FACTOR) -> CheckReport:
    """
    Survival at the last time along increasing drift caps: consecutive caps
    must agree within ci_factor combined half-widths once the cap exceeds
    the drift (reported as the largest normalized gap over the last pair).
    """
    last_t = frame['t'].max()
    final = frame[frame['t'] == last_t].sort_values('cap')
    half = 0.5 * (final['ci_high'] - final['ci_low']).to_numpy()
    survival = final['survival'].to_numpy()
    gaps = [abs(survival[k + 1] - survival[k]) / max(ci_factor * math.hypot(half[k], half[k + 1]), 1e-300)
            for k in range(len(survival) - 1)]
    statistic = gaps[-1] if gaps else 0.0
    return CheckReport(check_id='cap_stability', provenance='mc', statistic=float(statistic),
                       tolerance=1.0, rule=Rule.AT_MOST, n_samples=len(final),
                       details={'cap': final['cap'].tolist(), 'survival': survival.tolist(),
                                'normalized_gap': gaps})
