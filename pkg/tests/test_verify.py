"""Unit tests for the check functions and the run harness."""

import copy
import os
import shutil
import tempfile
import unittest

import numpy as np
import pytest

from src.analysis.constant_fit import ConstantStore, FittedConstant, constant_key
from src.data.experiment_config import ExperimentConfig
from src.data.models import CheckReport, CheckStatus, Rule
from src.duhamel.series import SeriesDiagnostics
from src.errors import ConfigError
from src.geometry.domain import Domain
from src.stable.params import StableParams
from src.verify import checks
from src.verify.harness import (REGISTRY, THEOREM_ITEMS, compare_constants, coverage,
                                run_checks, run_experiment, validate_checks)


class TestTwoSided(unittest.TestCase):
    def test_spread_and_fitted_constant(self):
        report = checks.check_two_sided([1.0, 2.0, 6.0], [1.0, 1.0, 2.0], bound=10.0,
                                        samples=[{'i': 0}, {'i': 1}, {'i': 2}])
        self.assertEqual(report.max_ratio, 3.0)
        self.assertEqual(report.min_ratio, 1.0)
        self.assertEqual(report.statistic, 3.0)
        self.assertEqual(report.fitted_constant, 3.0)
        self.assertEqual(report.argmax_sample, {'i': 2})
        self.assertTrue(report.passed)

    def test_excluded_samples(self):
        report = checks.check_two_sided([1.0, -1.0, 1.0], [1.0, 1.0, 0.0], bound=2.0)
        self.assertEqual(report.excluded, 2)
        self.assertEqual(report.statistic, 1.0)
        empty = checks.check_two_sided([0.0], [1.0], bound=2.0)
        self.assertFalse(empty.passed)


def diagnostics(c_emp, min_ratio, max_ratio):
    """Series diagnostics with two computed terms and the given ratio extremes."""
    return SeriesDiagnostics(ratios=[0.1, 0.01], c_emp=c_emp, c_hat=0.0, horizon=0.5,
                             truncation_index=2, tol=1e-4, min_ratio=min_ratio,
                             max_ratio=max_ratio)


class TestSeriesInvariants(unittest.TestCase):
    def test_ratios_inside_the_sandwich_pass(self):
        diag = diagnostics(0.2, 0.9, 1.1)
        self.assertTrue(diag.sandwich_ok and diag.positivity_ok)
        sandwich = checks.check_series_sandwich(diag)
        self.assertEqual(sandwich.check_id, 'series_sandwich')
        self.assertAlmostEqual(sandwich.statistic, 1.1 / 1.5)
        self.assertTrue(sandwich.passed)
        positivity = checks.check_series_positivity(diag)
        self.assertAlmostEqual(positivity.tolerance, 2.0 / 3.0 * 0.8)
        self.assertTrue(positivity.passed)

    def test_ratios_outside_the_sandwich_fail(self):
        diag = diagnostics(0.2, 0.1, 5.0)
        self.assertFalse(diag.sandwich_ok)
        self.assertFalse(diag.positivity_ok)
        self.assertEqual(checks.check_series_sandwich(diag).status, CheckStatus.FAIL)
        self.assertEqual(checks.check_series_positivity(diag).status, CheckStatus.FAIL)
        # domination alone does not see the spread of p^b / p0
        self.assertTrue(checks.check_series_domination(diag).passed)

    def test_weak_contraction_only_needs_a_positive_sum(self):
        diag = diagnostics(0.5, 0.05, 1.0)
        self.assertTrue(checks.check_series_positivity(diag).passed)
        self.assertTrue(checks.check_series_sandwich(diag).passed)
        self.assertFalse(checks.check_series_positivity(diagnostics(0.5, 0.0, 1.0)).passed)

    def test_no_contraction_fails_the_sandwich(self):
        report = checks.check_series_sandwich(diagnostics(1.2, 0.9, 1.1))
        self.assertFalse(report.passed)

    def test_agrees_with_the_diagnostic_flags(self):
        for c, low, high in [(0.1, 0.5, 1.2), (0.1, 0.8, 1.4), (0.3, 0.4, 1.9), (0.3, 0.2, 1.5)]:
            diag = diagnostics(c, low, high)
            self.assertEqual(checks.check_series_sandwich(diag).passed, diag.sandwich_ok)
            self.assertEqual(checks.check_series_positivity(diag).passed, diag.positivity_ok)


class TestKatoClosedForm(unittest.TestCase):
    def test_default_gate_is_tight(self):
        report = checks.check_kato_closed_form(StableParams(d=2, alpha=1.5))
        self.assertEqual(report.tolerance, 1e-6)
        self.assertTrue(report.passed)


class TestHarnack(unittest.TestCase):
    def setUp(self):
        """Set up the reference parameters on the unit ball."""
        self.params = StableParams(d=2, alpha=1.5)
        self.ball = Domain.ball((0.0, 0.0), 1.0)

    def test_factor(self):
        whole = Domain.whole_space(2)
        self.assertEqual(checks.harnack_factor(self.params, whole, [0.0, 0.0], [0.1, 0.0], 1.0)[0],
                         1.0)
        self.assertAlmostEqual(
            checks.harnack_factor(self.params, whole, [0.0, 0.0], [2.0, 0.0], 1.0)[0],
            2.0 ** 3.5)
        # rho(x) = 1, rho(y) = 0.25
        self.assertAlmostEqual(
            checks.harnack_factor(self.params, self.ball, [0.0, 0.0], [0.75, 0.0], 1.0)[0],
            4.0 ** 0.75)

    def test_harnack_report(self):
        points = np.array([[0.0, 0.0], [0.5, 0.0]])
        values = np.array([[1.0, 0.5]])
        half_widths = np.full((1, 2), 0.01)
        report = checks.check_harnack(values, half_widths, points, self.params, self.ball, 1.0,
                                      refined_values=values)
        self.assertEqual(report.n_samples, 4)
        self.assertEqual(report.statistic, 1.0)
        self.assertTrue(report.passed)
        self.assertGreater(report.fitted_constant, 0.0)

    def test_noisy_pairs_are_excluded(self):
        points = np.array([[0.0, 0.0], [0.5, 0.0]])
        values = np.array([[1.0, 0.01]])
        half_widths = np.full((1, 2), 0.01)
        report = checks.check_harnack(values, half_widths, points, self.params, self.ball, 1.0,
                                      refined_values=values)
        self.assertEqual(report.excluded, 2)
        self.assertEqual(report.n_samples, 2)


class TestValidation(unittest.TestCase):
    def test_registry_covers_the_theorem_items(self):
        for ids in THEOREM_ITEMS.values():
            for check_id in ids:
                self.assertIn(check_id, REGISTRY)

    def test_series_and_kato_checks_are_registered(self):
        for check_id in ('series_sandwich', 'series_positivity', 'kato_catalog',
                         'gam_stability', 'integral_26_stability'):
            self.assertIn(check_id, REGISTRY)

    def test_unknown_check(self):
        config = ExperimentConfig.from_dict({'params': {'d': 2, 'alpha': 1.5},
                                             'checks': ['free_scaling', 'no_such_check']})
        with self.assertRaises(ConfigError) as ctx:
            validate_checks(config)
        self.assertEqual(ctx.exception.field, 'checks[1].id')

    def test_coverage(self):
        reports = [CheckReport('two_sided', 'series', 1.0, 2.0),
                   CheckReport('chapman_kolmogorov', 'series', 0.0, 0.05)]
        covered = coverage(reports)
        self.assertEqual(covered['i'], ['two_sided'])
        self.assertEqual(covered['iii'], ['chapman_kolmogorov'])
        self.assertEqual(covered['v'], [])


class TestCompareConstants(unittest.TestCase):
    def setUp(self):
        """Set up a ball configuration and an empty store."""
        self.config = ExperimentConfig.from_dict({
            'params': {'d': 2, 'alpha': 1.5},
            'domain': {'kind': 'ball', 'center': [0.0, 0.0], 'radius': 1.0},
            'checks': ['two_sided'],
        })
        self.store = ConstantStore(slack=1.5)
        self.reports = [CheckReport('two_sided', 'series', 3.0, 10.0, n_samples=20,
                                    fitted_constant=3.0),
                        CheckReport('classical_3p', 'quadrature', 1.0, 0.0,
                                    rule=Rule.REPORT_ONLY)]

    def test_new_constants_count_as_one(self):
        report = compare_constants(self.store, self.config, self.reports)
        self.assertEqual(report.check_id, 'fitted_constants')
        self.assertEqual(report.statistic, 1.0)
        self.assertEqual(report.n_samples, 1)
        self.assertTrue(report.passed)
        key = constant_key('two_sided', 2, 1.5, 'ball')
        self.assertEqual(self.store.get_constant(key), 3.0)

    def test_growth_beyond_slack_fails(self):
        key = constant_key('two_sided', 2, 1.5, 'ball')
        self.store.record(FittedConstant('two_sided', key, 1.0, 20))
        report = compare_constants(self.store, self.config, self.reports)
        self.assertEqual(report.statistic, 3.0)
        self.assertEqual(report.status, CheckStatus.FAIL)
        self.assertEqual(report.argmax_sample, {'check_id': 'two_sided'})
        self.assertEqual(self.store.get_constant(key), 1.0)

    def test_nothing_fitted(self):
        self.assertIsNone(compare_constants(self.store, self.config, self.reports[1:]))


@pytest.fixture
def run_dir():
    """Temporary output directory."""
    path = tempfile.mkdtemp()
    yield path
    shutil.rmtree(path, ignore_errors=True)


def test_free_whole_space_run(minimal_config_data):
    config = ExperimentConfig.from_dict(minimal_config_data)
    reports = run_checks(config)
    assert [r.check_id for r in reports] == ['chapman_kolmogorov', 'free_scaling']
    by_id = {r.check_id: r for r in reports}
    assert by_id['free_scaling'].provenance == 'quadrature'
    assert by_id['chapman_kolmogorov'].provenance == 'series'
    assert by_id['chapman_kolmogorov'].n_samples == 4
    assert all(r.passed for r in reports)


def test_failing_inputs_become_failing_reports(minimal_config_data):
    data = copy.deepcopy(minimal_config_data)
    data['checks'] = ['free_scaling', '3p_sweep']
    reports = run_checks(ExperimentConfig.from_dict(data))
    by_id = {r.check_id: r for r in reports}
    # the three-point inequality needs a domain with a boundary
    assert not by_id['3p_sweep'].passed
    assert 'error' in by_id['3p_sweep'].details
    assert by_id['free_scaling'].passed


def test_run_experiment_writes_a_stable_manifest(minimal_config_data, run_dir):
    config = ExperimentConfig.from_dict(minimal_config_data)
    path, manifest = run_experiment(config, output_dir=run_dir)
    assert path.endswith(f'{config.hash_prefix}_manifest.json')
    assert manifest['config_hash'] == config.config_hash
    assert manifest['coverage']['iii'] == ['chapman_kolmogorov']
    ids = [r['check_id'] for r in manifest['reports']]
    assert ids == sorted(ids)
    with open(path) as f:
        first = f.read()
    run_experiment(config, output_dir=run_dir)
    with open(path) as f:
        assert f.read() == first


def test_required_coverage(minimal_config_data, run_dir):
    data = copy.deepcopy(minimal_config_data)
    data['require_coverage'] = True
    with pytest.raises(ConfigError):
        run_experiment(ExperimentConfig.from_dict(data), output_dir=run_dir)


CONFIG_DIR = os.path.join(os.path.dirname(__file__), os.pardir, 'configs')


@pytest.mark.parametrize('name, required', [
    ('minimal', {'free_fourier_bessel', 'mc_free_density'}),
    ('constant_drift', {'kato_closed_form', 'series_sandwich', 'series_positivity'}),
    ('ball_dirichlet', {'gam_stability', '3p_stability', 'integral_26_stability',
                        'kato_catalog'}),
])
def test_shipped_configs(name, required):
    config = ExperimentConfig.from_json(os.path.join(CONFIG_DIR, f'{name}.json'))
    validate_checks(config)
    assert required <= {spec.id for spec in config.checks}
