"""
Run orchestration: build the inputs a configuration's checks need, run the
checks as parallel jobs, merge the reports by check_id and write the run
manifest with its detail tables.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from src.analysis.constant_fit import ConstantStore, ConstantVerdict, FittedConstant, constant_key
from src.analysis.envelope import EnvelopeParams, classical_3p_report, fitted_constant_stability, sweep
from src.analysis.kato import DriftField
from src.data.experiment_config import CheckSpec, ExperimentConfig
from src.data.models import CheckReport, Rule
from src.data.storage import MANIFEST_FORMAT, RunStorage, summary_table
from src.duhamel.field import KernelField
from src.duhamel.grid import GridSpec
from src.duhamel.series import (DuhamelOperator, SeriesDiagnostics, compare_recursions,
                                dual_duhamel_check, sum_series, sum_source_series)
from src.duhamel.sources import BaseKernel, EnvelopeKernel, make_kernel, tabulate_base_kernel
from src.errors import ConfigError, ContractError, StableDriftError
from src.geometry.domain import BoxSpec
from src.montecarlo.paths import (DensityEstimate, PathConfig, cap_sequence_survival,
                                  estimate_density, estimate_semigroup)
from src.montecarlo.surface import RatioSurface
from src.utils.drift_catalog import DriftCatalog
from src.utils.test_functions import bump, cell_bumps
from src.verify import checks

logger = logging.getLogger(__name__)

THEOREM_ITEMS: Dict[str, Tuple[str, ...]] = {
    'i': ('two_sided', 'mc_two_sided'),
    'ii': ('gradient_bound', 'dual_duhamel'),
    'iii': ('chapman_kolmogorov',),
    'iv': ('generator_identity',),
    'v': ('mass',),
    'vi': ('strong_continuity',),
}
NOTES = ['uniqueness of the Duhamel solution is not certified; '
         'only direct/adjoint recursion consistency is checked']
HISTOGRAM_RESOLUTION = 20


class RunInputs:
    """
    Everything the checks of one run read, built on first use.

    The harness touches every attribute a check needs before the check jobs
    start, so the jobs only read.
    """

    def __init__(self, config: ExperimentConfig, workers: int = 1):
        self.config = config
        self.workers = workers
        self.params = config.params
        self.domain = config.domain
        self.quad = config.quadrature

    @cached_property
    def drift(self) -> DriftField:
        return DriftCatalog.build(self.config.drift, self.domain)

    @cached_property
    def grid(self) -> GridSpec:
        return GridSpec.build(self.params, self.domain, **self.config.grid.build_kwargs())

    @cached_property
    def refined_grid(self) -> GridSpec:
        return self.grid.refined(self.config.grid.refinement)

    @cached_property
    def envelope_params(self) -> EnvelopeParams:
        return EnvelopeParams(self.params, self.domain, T=self.grid.horizon)

    def path_config(self, **overrides) -> PathConfig:
        return PathConfig(**{**self.config.montecarlo.path_settings(), **overrides},
                          workers=self.workers)

    @cached_property
    def mc_times(self) -> np.ndarray:
        """Grid times at least ten steps long, rounded to the path step."""
        dt = self.config.montecarlo.dt
        times = self.grid.times[self.grid.times >= 10.0 * dt]
        return np.unique(np.rint(times / dt) * dt)

    def histogram_box(self, start: Sequence[float]) -> BoxSpec:
        if self.domain.kind == 'ball':
            return BoxSpec.centered(self.params.d, self.domain.radius, HISTOGRAM_RESOLUTION,
                                    self.domain.center)
        return BoxSpec.centered(self.params.d, 3.0, HISTOGRAM_RESOLUTION, start)

    @cached_property
    def densities(self) -> List[DensityEstimate]:
        """Histogram estimates of p^{b,D}(t, y, .) started at every target y."""
        config = self.path_config()
        return [estimate_density(self.params, self.domain, self.drift, y, self.mc_times,
                                 self.histogram_box(y), config)
                for y in self.config.targets]

    @cached_property
    def surface(self) -> Optional[RatioSurface]:
        if self.config.base_kernel != 'monte_carlo':
            return None
        zero = DriftCatalog.build({'name': 'zero'}, self.domain)
        config = self.path_config()
        estimates = [estimate_density(self.params, self.domain, zero, y, self.mc_times,
                                      self.histogram_box(y), config)
                     for y in self.config.targets]
        return RatioSurface.fit(self.params, self.domain, estimates)

    @cached_property
    def kernel(self) -> BaseKernel:
        return make_kernel(self.config.base_kernel, self.params, self.domain, self.surface)

    @cached_property
    def bases(self) -> List[KernelField]:
        return [tabulate_base_kernel(self.kernel, self.grid, y) for y in self.config.targets]

    @cached_property
    def envelopes(self) -> List[KernelField]:
        """q^D for every target (the free kernel on the whole space)."""
        if self.domain.is_whole_space:
            envelope: BaseKernel = BaseKernel(self.params, self.domain)
        else:
            envelope = EnvelopeKernel(self.params, self.domain)
        return [tabulate_base_kernel(envelope, self.grid, y) for y in self.config.targets]

    def _sum(self, base: KernelField) -> Tuple[KernelField, SeriesDiagnostics]:
        settings = self.config.series
        return sum_series(base, self.drift, k_max=settings.k_max, tol=settings.tol,
                          slack=settings.slack, workers=self.workers)

    @cached_property
    def series(self) -> List[Tuple[KernelField, SeriesDiagnostics]]:
        return [self._sum(base) for base in self.bases]

    @cached_property
    def sources(self) -> List[KernelField]:
        """p^b(t, x, .) for every target x, with as many terms as the target series."""
        return [sum_source_series(base, self.drift, max(diag.truncation_index, 1), self.workers)
                for base, (_, diag) in zip(self.bases, self.series)]

    @cached_property
    def refined(self) -> Tuple[KernelField, KernelField]:
        """(series, base) for the first target on the refined grid."""
        base = tabulate_base_kernel(self.kernel, self.refined_grid, self.config.targets[0])
        return self._sum(base)[0], base

    @cached_property
    def operator(self) -> DuhamelOperator:
        return DuhamelOperator(self.bases[0], self.drift, self.workers)

    @cached_property
    def test_function(self):
        """Bump at the first target, supported strictly inside D."""
        y = np.asarray(self.config.targets[0], dtype=float)
        radius = min(1.0, 0.5 * float(self.domain.distance(y)))
        return bump(y, radius=radius, amplitude=np.e, name='target_bump')

    @cached_property
    def harnack_points(self) -> np.ndarray:
        rng = np.random.Generator(np.random.Philox(self.config.montecarlo.seed))
        return self.domain.sample(rng, self.config.montecarlo.n_harnack_points,
                                  self.histogram_box(self.config.targets[0]))

    @cached_property
    def harnack_estimates(self) -> Dict[str, Any]:
        """P_T f at every Harnack point with n and 4n paths."""
        points = self.harnack_points
        rng = np.random.Generator(np.random.Philox(self.config.montecarlo.seed + 1))
        centers = self.domain.sample(rng, 3, self.histogram_box(self.config.targets[0]),
                                     boundary_fraction=0.0)
        radius = float(min(0.5, 0.5 * np.min(self.domain.distance(centers))))
        functions = cell_bumps(centers, radius)
        dt = self.config.montecarlo.dt
        T = float(np.rint(self.grid.horizon / dt) * dt)
        n_paths = self.config.montecarlo.n_paths

        def run(config: PathConfig) -> Tuple[np.ndarray, np.ndarray]:
            results = [estimate_semigroup(self.params, self.domain, self.drift, x, T, functions, config)
                       for x in points]
            return (np.stack([r[0] for r in results], axis=1),
                    np.stack([r[1] for r in results], axis=1))

        values, half_widths = run(self.path_config())
        refined, _ = run(self.path_config(n_paths=4 * n_paths))
        return {'values': values, 'half_widths': half_widths, 'refined': refined,
                'points': points, 'T': T}

    def provenance(self) -> str:
        return checks.series_provenance(self.bases[0])


CheckJob = Callable[[RunInputs, CheckSpec], List[CheckReport]]


@dataclass(frozen=True)
class CheckEntry:
    """A registered check: the job, the inputs it reads and its default tolerance."""
    job: CheckJob
    needs: Tuple[str, ...] = ()
    tolerance: Optional[float] = None


def _tol(spec: CheckSpec, default: float) -> float:
    return default if spec.tolerance is None else float(spec.tolerance)


def _whole_space_only(inputs: RunInputs, check_id: str) -> None:
    if not inputs.domain.is_whole_space:
        raise ContractError(f"{check_id} runs on the whole space only")


def _job_free_normalization(inputs: RunInputs, spec: CheckSpec) -> List[CheckReport]:
    return [checks.check_free_normalization(inputs.params, inputs.quad, _tol(spec, 1e-3))]


def _job_free_scaling(inputs: RunInputs, spec: CheckSpec) -> List[CheckReport]:
    return [checks.check_free_scaling(inputs.params, inputs.quad, tolerance=_tol(spec, 1e-6))]


def _job_free_fourier_bessel(inputs: RunInputs, spec: CheckSpec) -> List[CheckReport]:
    return [checks.check_free_fourier_bessel(inputs.params, inputs.quad, tolerance=_tol(spec, 1e-5))]


def _job_kato_closed_form(inputs: RunInputs, spec: CheckSpec) -> List[CheckReport]:
    return [checks.check_kato_closed_form(inputs.params, quad=inputs.quad,
                                          tolerance=_tol(spec, checks.KATO_CLOSED_FORM_TOLERANCE))]


def _job_kato_co_vanishing(inputs: RunInputs, spec: CheckSpec) -> List[CheckReport]:
    expected = DriftCatalog.in_kato_class(inputs.drift, inputs.params.alpha)
    return [checks.check_kato_co_vanishing(inputs.params, inputs.drift, inputs.domain,
                                           quad=inputs.quad, expected=expected, **spec.options)]


def _job_kato_catalog(inputs: RunInputs, spec: CheckSpec) -> List[CheckReport]:
    drifts = DriftCatalog.reference_drifts(inputs.domain, inputs.params.alpha)
    expected = [DriftCatalog.in_kato_class(b, inputs.params.alpha) for b in drifts]
    return [checks.check_kato_catalog(inputs.params, inputs.domain, drifts, expected,
                                      **spec.options)]


def _sweep_job(kind: str) -> CheckJob:
    def job(inputs: RunInputs, spec: CheckSpec) -> List[CheckReport]:
        n, seed = inputs.config.sweep['n'], inputs.config.sweep['seed']
        return [sweep(inputs.envelope_params, kind, n, seed, inputs.workers)]
    return job


def _stability_job(kind: str) -> CheckJob:
    def job(inputs: RunInputs, spec: CheckSpec) -> List[CheckReport]:
        n, seed = inputs.config.sweep['n'], inputs.config.sweep['seed']
        return [fitted_constant_stability(inputs.envelope_params, kind, n, seed, inputs.workers,
                                          slack=_tol(spec, checks.REFINEMENT_SLACK))]
    return job


def _job_classical_3p(inputs: RunInputs, spec: CheckSpec) -> List[CheckReport]:
    n, seed = inputs.config.sweep['n'], inputs.config.sweep['seed']
    return [classical_3p_report(inputs.envelope_params, n, seed, inputs.workers)]


def _job_contraction_horizon(inputs: RunInputs, spec: CheckSpec) -> List[CheckReport]:
    return [checks.check_contraction_horizon(inputs.bases[0], inputs.drift, _tol(spec, 0.25))]


def _job_series_domination(inputs: RunInputs, spec: CheckSpec) -> List[CheckReport]:
    reports = [checks.check_series_domination(diag) for _, diag in inputs.series]
    return [max(reports, key=lambda r: r.statistic)]


def _job_series_sandwich(inputs: RunInputs, spec: CheckSpec) -> List[CheckReport]:
    reports = [checks.check_series_sandwich(diag) for _, diag in inputs.series]
    return [max(reports, key=lambda r: r.statistic)]


def _job_series_positivity(inputs: RunInputs, spec: CheckSpec) -> List[CheckReport]:
    reports = [checks.check_series_positivity(diag) for _, diag in inputs.series]
    return [min(reports, key=lambda r: (r.passed, r.statistic))]


def _job_translation_oracle(inputs: RunInputs, spec: CheckSpec) -> List[CheckReport]:
    _whole_space_only(inputs, spec.id)
    if inputs.config.drift.get('name') not in ('constant', 'zero'):
        raise ContractError("The translation oracle needs a constant drift")
    vector = inputs.config.drift.get('vector', [0.0] * inputs.params.d)
    return checks.check_translation_oracle(inputs.series[0][0], vector,
                                           tolerance=_tol(spec, checks.DEFAULT_TOLERANCE),
                                           **spec.options)


def _job_two_sided(inputs: RunInputs, spec: CheckSpec) -> List[CheckReport]:
    bound = checks.WHOLE_SPACE_SPREAD if inputs.domain.is_whole_space else checks.DIRICHLET_SPREAD
    reports = [checks.series_two_sided(series, envelope, _tol(spec, bound), inputs.provenance())
               for (series, _), envelope in zip(inputs.series, inputs.envelopes)]
    return [max(reports, key=lambda r: np.nan_to_num(r.statistic, nan=np.inf))]


def _job_gradient_bound(inputs: RunInputs, spec: CheckSpec) -> List[CheckReport]:
    refined_series, refined_base = inputs.refined
    return [checks.check_gradient_bound(inputs.series[0][0], inputs.bases[0], refined_series,
                                        refined_base, _tol(spec, checks.REFINEMENT_SLACK),
                                        reference=inputs.bases[0].meta.get('gradient_constant'))]


def _job_dual_duhamel(inputs: RunInputs, spec: CheckSpec) -> List[CheckReport]:
    report = dual_duhamel_check(inputs.bases[0], inputs.series[0][0], inputs.drift,
                                tolerance=_tol(spec, checks.DEFAULT_TOLERANCE),
                                workers=inputs.workers)
    report.provenance = inputs.provenance()
    return [report]


def _job_recursion_agreement(inputs: RunInputs, spec: CheckSpec) -> List[CheckReport]:
    report = compare_recursions(inputs.kernel, inputs.drift, inputs.grid, inputs.config.targets,
                                tolerance=_tol(spec, checks.DEFAULT_TOLERANCE),
                                workers=inputs.workers)
    report.provenance = inputs.provenance()
    return [report]


def _job_chapman_kolmogorov(inputs: RunInputs, spec: CheckSpec) -> List[CheckReport]:
    t = inputs.grid.horizon
    s = float(spec.options.get('s', t / 2.0))
    targets = [series for series, _ in inputs.series]
    return [checks.check_chapman_kolmogorov(targets, inputs.sources, s, t,
                                            _tol(spec, checks.DEFAULT_TOLERANCE),
                                            inputs.provenance())]


def _job_semigroup(inputs: RunInputs, spec: CheckSpec) -> List[CheckReport]:
    tolerances = dict(spec.options.get('tolerances', {}))
    return checks.check_semigroup_side_conditions(inputs.operator, inputs.test_function,
                                                  inputs.sources[0], inputs.provenance(),
                                                  tolerances=tolerances, quad=inputs.quad)


def _job_mc_free_density(inputs: RunInputs, spec: CheckSpec) -> List[CheckReport]:
    _whole_space_only(inputs, spec.id)
    if not inputs.drift.is_zero:
        raise ContractError("The free density check needs the zero drift")
    return [checks.check_mc_free_density(inputs.densities[0], inputs.params, _tol(spec, 0.05))]


def _job_mc_two_sided(inputs: RunInputs, spec: CheckSpec) -> List[CheckReport]:
    bound = checks.WHOLE_SPACE_SPREAD if inputs.domain.is_whole_space else checks.DIRICHLET_SPREAD
    envelope = (BaseKernel(inputs.params, inputs.domain) if inputs.domain.is_whole_space
                else EnvelopeKernel(inputs.params, inputs.domain))

    def envelope_at(t: float, start: np.ndarray, centers: np.ndarray) -> np.ndarray:
        return envelope.values(t, centers, start)

    layer = float(spec.options.get('layer', 2.0 * inputs.histogram_box(inputs.config.targets[0]).spacing[0]))
    reports = [checks.mc_two_sided(est, inputs.domain, envelope_at, _tol(spec, bound), layer)
               for est in inputs.densities]
    return [max(reports, key=lambda r: np.nan_to_num(r.statistic, nan=np.inf))]


def _job_harnack(inputs: RunInputs, spec: CheckSpec) -> List[CheckReport]:
    data = inputs.harnack_estimates
    return [checks.check_harnack(data['values'], data['half_widths'], data['points'],
                                 inputs.params, inputs.domain, data['T'], data['refined'],
                                 slack=_tol(spec, checks.REFINEMENT_SLACK))]


def _job_cap_stability(inputs: RunInputs, spec: CheckSpec) -> List[CheckReport]:
    frame = cap_sequence_survival(inputs.params, inputs.domain, inputs.drift,
                                  inputs.config.targets[0], inputs.mc_times[-1:],
                                  inputs.config.montecarlo.caps, inputs.path_config())
    report = checks.check_cap_stability(frame)
    if spec.tolerance is not None:
        report.tolerance = float(spec.tolerance)
    return [report]


REGISTRY: Dict[str, CheckEntry] = {
    'free_normalization': CheckEntry(_job_free_normalization),
    'free_scaling': CheckEntry(_job_free_scaling),
    'free_fourier_bessel': CheckEntry(_job_free_fourier_bessel),
    'kato_closed_form': CheckEntry(_job_kato_closed_form),
    'kato_co_vanishing': CheckEntry(_job_kato_co_vanishing, ('drift',)),
    'kato_catalog': CheckEntry(_job_kato_catalog),
    'gam_sweep': CheckEntry(_sweep_job('gam'), ('envelope_params',)),
    '3p_sweep': CheckEntry(_sweep_job('3p'), ('envelope_params',)),
    'integral_26_sweep': CheckEntry(_sweep_job('integral_26'), ('envelope_params',)),
    'gam_stability': CheckEntry(_stability_job('gam'), ('envelope_params',)),
    '3p_stability': CheckEntry(_stability_job('3p'), ('envelope_params',)),
    'integral_26_stability': CheckEntry(_stability_job('integral_26'), ('envelope_params',)),
    'classical_3p': CheckEntry(_job_classical_3p, ('envelope_params',)),
    'contraction_horizon': CheckEntry(_job_contraction_horizon, ('drift', 'bases')),
    'series_domination': CheckEntry(_job_series_domination, ('series',)),
    'series_sandwich': CheckEntry(_job_series_sandwich, ('series',)),
    'series_positivity': CheckEntry(_job_series_positivity, ('series',)),
    'translation_oracle': CheckEntry(_job_translation_oracle, ('series',)),
    'two_sided': CheckEntry(_job_two_sided, ('series', 'envelopes')),
    'gradient_bound': CheckEntry(_job_gradient_bound, ('series', 'refined')),
    'dual_duhamel': CheckEntry(_job_dual_duhamel, ('series',)),
    'recursion_agreement': CheckEntry(_job_recursion_agreement, ('kernel', 'drift')),
    'chapman_kolmogorov': CheckEntry(_job_chapman_kolmogorov, ('series', 'sources')),
    'semigroup': CheckEntry(_job_semigroup, ('series', 'sources', 'operator', 'test_function')),
    'mc_free_density': CheckEntry(_job_mc_free_density, ('densities',)),
    'mc_two_sided': CheckEntry(_job_mc_two_sided, ('densities',)),
    'harnack': CheckEntry(_job_harnack, ('harnack_estimates',)),
    'cap_stability': CheckEntry(_job_cap_stability, ('drift', 'mc_times')),
}


def validate_checks(config: ExperimentConfig) -> None:
    """Every requested check id must be registered."""
    for i, spec in enumerate(config.checks):
        if spec.id not in REGISTRY:
            raise ConfigError(f'checks[{i}].id', f"unknown check '{spec.id}' "
                                                 f"(known: {sorted(REGISTRY)})")


def _error_report(spec: CheckSpec, error: Exception) -> CheckReport:
    return CheckReport(check_id=spec.id, provenance='quadrature', statistic=float('nan'),
                       tolerance=float('nan'), rule=Rule.AT_MOST, n_samples=0,
                       details={'error': f"{type(error).__name__}: {error}"})


def _run_job(inputs: RunInputs, spec: CheckSpec) -> List[CheckReport]:
    try:
        reports = REGISTRY[spec.id].job(inputs, spec)
    except ConfigError:
        raise
    except StableDriftError as e:
        logger.error(f"Check {spec.id} could not run: {e}")
        return [_error_report(spec, e)]
    for report in reports:
        logger.info(f"{report.check_id}: statistic={report.statistic} tolerance={report.tolerance} "
                    f"-> {report.status.value}")
    return reports


def coverage(reports: Sequence[CheckReport]) -> Dict[str, List[str]]:
    """Theorem item -> ids of the reports covering it."""
    present = {r.check_id for r in reports}
    return {item: [c for c in ids if c in present] for item, ids in THEOREM_ITEMS.items()}


def run_checks(config: ExperimentConfig, workers: int = 1,
               inputs: Optional[RunInputs] = None) -> List[CheckReport]:
    """Build the shared inputs, run every requested check, merge by check_id."""
    validate_checks(config)
    inputs = inputs or RunInputs(config, workers)
    ready, reports = [], []
    for spec in config.checks:
        try:
            for need in REGISTRY[spec.id].needs:
                getattr(inputs, need)
        except ConfigError:
            raise
        except StableDriftError as e:
            logger.error(f"Inputs of check {spec.id} could not be built: {e}")
            reports.append(_error_report(spec, e))
            continue
        ready.append(spec)
    results = Parallel(n_jobs=workers, prefer='threads')(
        delayed(_run_job)(inputs, spec) for spec in ready
    )
    reports += [report for batch in results for report in batch]
    return sorted(reports, key=lambda r: r.check_id)


def compare_constants(store: ConstantStore, config: ExperimentConfig,
                      reports: Sequence[CheckReport]) -> Optional[CheckReport]:
    """
    Record every fitted constant in the store and report the largest
    fitted/stored ratio against the store's slack.

    A constant seen for the first time counts as ratio 1, so a rerun of an
    unchanged configuration reproduces the same report.
    """
    fitted = [r for r in reports
              if r.fitted_constant is not None and np.isfinite(r.fitted_constant)]
    if not fitted:
        return None
    ratios, verdicts = [], {}
    for report in fitted:
        key = constant_key(report.check_id, config.params.d, config.params.alpha,
                           config.domain.kind)
        stored = store.get_constant(key)
        verdict = store.record(FittedConstant(report.check_id, key, report.fitted_constant,
                                              report.n_samples))
        verdicts[report.check_id] = verdict.value
        ratios.append(1.0 if not stored or stored <= 0.0 else report.fitted_constant / stored)
    worst = int(np.argmax(ratios))
    exceeded = [c for c, v in verdicts.items() if v == ConstantVerdict.EXCEEDED.value]
    if exceeded:
        logger.warning(f"Fitted constants above their stored values: {exceeded}")
    logger.debug(f"Stored constant verdicts: {verdicts}")
    return CheckReport(check_id='fitted_constants', provenance=fitted[worst].provenance,
                       statistic=float(ratios[worst]), tolerance=store.slack,
                       rule=Rule.AT_MOST, n_samples=len(fitted),
                       max_ratio=float(ratios[worst]), min_ratio=float(min(ratios)),
                       argmax_sample={'check_id': fitted[worst].check_id})


def build_manifest(config: ExperimentConfig, reports: Sequence[CheckReport],
                   artifacts: Sequence[str]) -> Dict[str, Any]:
    """The run manifest: free of timestamps so equal runs hash equally."""
    binding = [r for r in reports if not r.is_surrogate]
    return {
        'format': MANIFEST_FORMAT,
        'config_hash': config.config_hash,
        'config': config.to_dict(),
        'seeds': config.seeds(),
        'reports': [r.to_dict() for r in reports],
        'overall_pass': all(r.passed for r in binding),
        'coverage': coverage(reports),
        'notes': list(NOTES),
        'artifacts': sorted(artifacts),
    }


def run_experiment(config: ExperimentConfig, workers: int = 1,
                   output_dir: Optional[str] = None) -> Tuple[str, Dict[str, Any]]:
    """
    Run the configured checks and write the manifest, the per-check CSV
    details and the summary table.

    Returns:
        (manifest path, manifest)

    Raises:
        ConfigError: unknown check id, or coverage required and incomplete
    """
    reports = run_checks(config, workers)
    covered = coverage(reports)
    missing = [item for item, ids in covered.items() if not ids]
    if config.require_coverage and missing:
        raise ConfigError('checks', f"no report for theorem items {missing}")
    storage = RunStorage(output_dir or config.output_dir, config.hash_prefix)
    store = ConstantStore()
    store.load_constants_from_json(storage.path('constants', 'json'))
    stored_report = compare_constants(store, config, reports)
    if stored_report is not None:
        reports = sorted([*reports, stored_report], key=lambda r: r.check_id)
        store.save_constants_to_json(storage.path('constants', 'json'))
    storage.append_reports(reports)
    artifacts = storage.write_details(reports)
    artifacts.append(storage.write_frame('summary', summary_table(reports)))
    manifest = build_manifest(config, reports, artifacts)
    path = storage.write_manifest(manifest)
    failed = [r.check_id for r in reports if not r.is_surrogate and not r.passed]
    if failed:
        logger.warning(f"Failed checks: {failed}")
    logger.info(f"Run {config.hash_prefix}: {len(reports)} reports, overall pass "
                f"{manifest['overall_pass']}")
    return path, manifest
