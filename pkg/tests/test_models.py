"""Unit tests for the CheckReport class and ratio reports."""

import json
import unittest

import numpy as np

from src.data.models import CheckReport, CheckStatus, Rule, ratio_report


class TestCheckReport(unittest.TestCase):
    def test_pass_rules(self):
        at_most = CheckReport('mass', 'series', statistic=0.5, tolerance=1.0)
        at_least = CheckReport('mass', 'series', statistic=0.5, tolerance=1.0, rule=Rule.AT_LEAST)
        finite = CheckReport('gam_sweep', 'quadrature', statistic=1e9, tolerance=np.inf,
                             rule=Rule.FINITE)
        self.assertTrue(at_most.passed)
        self.assertFalse(at_least.passed)
        self.assertTrue(finite.passed)
        self.assertEqual(at_least.status, CheckStatus.FAIL)

    def test_nan_statistic_fails(self):
        for rule in (Rule.AT_MOST, Rule.AT_LEAST, Rule.FINITE):
            report = CheckReport('two_sided', 'series', statistic=float('nan'), tolerance=1.0,
                                 rule=rule)
            self.assertFalse(report.passed)

    def test_report_only_never_fails(self):
        report = CheckReport('classical_3p', 'quadrature', statistic=float('inf'),
                             tolerance=0.0, rule=Rule.REPORT_ONLY)
        self.assertTrue(report.passed)
        self.assertEqual(report.status, CheckStatus.REPORTED)

    def test_validation(self):
        with self.assertRaises(ValueError):
            CheckReport('mass', 'guess', statistic=0.0, tolerance=1.0)
        with self.assertRaises(ValueError):
            CheckReport('mass', 'series', statistic=0.0, tolerance=1.0, n_samples=-1)
        self.assertEqual(CheckReport('mass', 'mc', 0.0, 1.0, rule='at_least').rule, Rule.AT_LEAST)

    def test_surrogate_flag(self):
        self.assertTrue(CheckReport('two_sided', 'surrogate', 1.0, 2.0).is_surrogate)
        self.assertFalse(CheckReport('two_sided', 'mc', 1.0, 2.0).is_surrogate)

    def test_dict_round_trip_reproduces_verdict(self):
        report = CheckReport('harnack', 'mc', statistic=np.float64(3.5), tolerance=np.inf,
                             rule=Rule.FINITE, n_samples=6, fitted_constant=3.5,
                             details={'ratios': np.array([1.0, 3.5]), 'worst': np.int64(1)})
        data = json.loads(json.dumps(report.to_dict()))
        self.assertEqual(data['tolerance'], 'inf')
        self.assertEqual(data['details']['ratios'], [1.0, 3.5])
        restored = CheckReport.from_dict(data)
        self.assertEqual(restored.tolerance, float('inf'))
        self.assertEqual(restored.passed, report.passed)
        self.assertEqual(restored.to_dict(), report.to_dict())


class TestRatioReport(unittest.TestCase):
    def test_max_ratio_and_argmax(self):
        report = ratio_report('gam', 'quadrature', [1.0, 6.0, 2.0], [2.0, 3.0, 1.0],
                              sample_at=lambda i: {'index': i})
        self.assertEqual(report.statistic, 2.0)
        self.assertEqual(report.fitted_constant, 2.0)
        self.assertEqual(report.min_ratio, 0.5)
        self.assertIn(report.argmax_sample['index'], (1, 2))
        self.assertEqual(report.rule, Rule.FINITE)

    def test_vanishing_denominators_are_excluded(self):
        report = ratio_report('3p', 'quadrature', [1.0, 1.0, np.nan], [0.0, 4.0, 1.0])
        self.assertEqual(report.excluded, 2)
        self.assertEqual(report.statistic, 0.25)
        self.assertEqual(report.n_samples, 3)

    def test_all_excluded(self):
        report = ratio_report('3p', 'quadrature', [1.0], [0.0])
        self.assertTrue(np.isnan(report.statistic))
        self.assertFalse(report.passed)
