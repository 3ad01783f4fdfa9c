"""Unit tests for drift fields, the drift catalog and the Kato moduli."""

import math
import unittest

import numpy as np
import pytest

from src.analysis.kato import (DriftField, beta_criterion, co_vanishing, constant_drift_modulus,
                               decay_slope, exit_distance, kato_modulus, kato_rate_curve,
                               scaled_probes)
from src.errors import ConfigError, DomainError
from src.geometry.domain import Domain
from src.stable.params import QuadratureConfig, StableParams
from src.utils.drift_catalog import DriftCatalog

ORIGIN = np.zeros((1, 2))


class TestDriftField(unittest.TestCase):
    def setUp(self):
        """Set up a constant drift on the unit ball."""
        self.ball = Domain.ball((0.0, 0.0), 1.0)
        self.drift = DriftCatalog.build({'name': 'constant', 'vector': [3.0, -0.5]}, self.ball)

    def test_zero_outside_domain(self):
        values = self.drift(np.array([[0.0, 0.0], [2.0, 0.0]]))
        np.testing.assert_allclose(values, [[3.0, -0.5], [0.0, 0.0]])

    def test_cap_is_componentwise(self):
        capped = self.drift.capped(1.0)
        np.testing.assert_allclose(capped(np.zeros((1, 2))), [[1.0, -0.5]])
        with self.assertRaises(DomainError):
            self.drift.capped(0.0)

    def test_singular_drift_is_finite_at_pole(self):
        drift = DriftCatalog.build({'name': 'singular', 'pole': [0.0, 0.0], 'power': 0.2,
                                    'cap': 50.0}, self.ball)
        self.assertTrue(np.all(np.isfinite(drift(np.zeros((1, 2))))))
        self.assertLessEqual(float(np.abs(drift(np.array([[1e-9, 0.0]]))).max()), 50.0)

    def test_catalog_rejects_unknown_names(self):
        with self.assertRaises(ConfigError) as ctx:
            DriftCatalog.build({'name': 'vortex'}, self.ball)
        self.assertEqual(ctx.exception.field, 'drift.name')
        with self.assertRaises(ConfigError):
            DriftCatalog.build({'name': 'constant', 'direction': [1.0, 0.0]}, self.ball)

    def test_kato_class_expectation(self):
        zero = DriftCatalog.build({'name': 'zero'}, self.ball)
        weak = DriftCatalog.build({'name': 'singular', 'pole': [0.0, 0.0], 'power': 0.2}, self.ball)
        strong = DriftCatalog.build({'name': 'singular', 'pole': [0.0, 0.0], 'power': 0.9}, self.ball)
        self.assertTrue(zero.is_zero)
        self.assertTrue(DriftCatalog.in_kato_class(zero, 1.5))
        self.assertTrue(DriftCatalog.in_kato_class(weak, 1.5))
        self.assertFalse(DriftCatalog.in_kato_class(strong, 1.5))


class TestKatoModulus(unittest.TestCase):
    def setUp(self):
        """Set up the reference regime and a unit constant drift on R^2."""
        self.params = StableParams(d=2, alpha=1.5)
        self.whole = Domain.whole_space(2)
        self.unit = DriftField(lambda x: np.broadcast_to([1.0, 0.0], x.shape), self.whole, 1.0,
                               'constant')

    def test_constant_drift_closed_form(self):
        """|b| = 1 on R^2: K(r) = 2 pi r^(alpha-1) / (alpha-1)."""
        for r in (0.01, 0.1, 1.0):
            value = kato_modulus(self.params, self.unit, self.whole, r, probes=ORIGIN, n_angles=16)
            self.assertAlmostEqual(value / constant_drift_modulus(self.params, r), 1.0, places=6)
        self.assertAlmostEqual(constant_drift_modulus(self.params, 1.0),
                               2.0 * math.pi / 0.5, places=12)

    def test_zero_drift_has_zero_modulus(self):
        zero = DriftCatalog.build({'name': 'zero'}, self.whole)
        self.assertEqual(kato_modulus(self.params, zero, self.whole, 0.5, probes=ORIGIN), 0.0)
        self.assertEqual(beta_criterion(self.params, zero, self.whole, 0.5, 0.1, probes=ORIGIN), 0.0)

    def test_monotone_in_radius(self):
        curve = kato_rate_curve(self.params, self.unit, self.whole, [0.001, 0.01, 0.1],
                                probes=ORIGIN, n_angles=16)
        values = [k for _, k in curve]
        self.assertTrue(all(a < b for a, b in zip(values, values[1:])))

    def test_ball_truncates_the_integral(self):
        """Inside B(0, 1) the modulus at the centre is the free one for r < 1 and capped beyond."""
        ball = Domain.ball((0.0, 0.0), 1.0)
        drift = DriftCatalog.build({'name': 'constant', 'vector': [1.0, 0.0]}, ball)
        inside = kato_modulus(self.params, drift, ball, 0.5, probes=ORIGIN, n_angles=16)
        self.assertAlmostEqual(inside / constant_drift_modulus(self.params, 0.5), 1.0, places=6)
        capped = kato_modulus(self.params, drift, ball, 4.0, probes=ORIGIN, n_angles=16)
        self.assertAlmostEqual(capped / constant_drift_modulus(self.params, 1.0), 1.0, places=6)

    def test_invalid_arguments(self):
        with self.assertRaises(DomainError):
            kato_modulus(self.params, self.unit, self.whole, 0.0, probes=ORIGIN)
        with self.assertRaises(DomainError):
            kato_modulus(StableParams(d=2, alpha=0.8), self.unit, self.whole, 0.1, probes=ORIGIN)
        with self.assertRaises(DomainError):
            kato_modulus(self.params, self.unit, self.whole, 0.1)
        with self.assertRaises(DomainError):
            beta_criterion(self.params, self.unit, self.whole, 0.2, 0.1, probes=ORIGIN)

    def test_exit_distance(self):
        ball = Domain.ball((0.0, 0.0), 1.0)
        self.assertAlmostEqual(exit_distance(ball, np.array([0.5, 0.0]), np.array([1.0, 0.0])), 0.5)
        self.assertAlmostEqual(exit_distance(ball, np.array([0.5, 0.0]), np.array([-1.0, 0.0])), 1.5)
        self.assertTrue(math.isinf(exit_distance(self.whole, np.zeros(2), np.array([1.0, 0.0]))))

    def test_co_vanishing_decreases(self):
        result = co_vanishing(self.params, self.unit, self.whole, beta=0.5, eps=0.05, k_max=3,
                              probes=ORIGIN, n_angles=16)
        self.assertEqual(result['k'], [1, 2, 3])
        self.assertTrue(all(a > b for a, b in zip(result['kato'], result['kato'][1:])))
        self.assertTrue(all(a > b for a, b in zip(result['beta'], result['beta'][1:])))
        self.assertIn('consistent', result)

    def test_beta_criterion_closed_form(self):
        """|b| = 1 on R^2, beta = 4/3: 2 pi t^(1/3) (1/(alpha-1) + 1/(alpha beta + 1 - alpha))."""
        value = beta_criterion(self.params, self.unit, self.whole, 4.0 / 3.0, 0.001,
                               probes=ORIGIN, n_angles=16)
        self.assertAlmostEqual(value, 16.0 * math.pi / 3.0 * 0.1, places=4)
        larger = beta_criterion(self.params, self.unit, self.whole, 4.0 / 3.0, 0.01,
                                probes=ORIGIN, n_angles=16)
        self.assertGreaterEqual(larger, value)

    def test_beta_criterion_needs_an_interior_point(self):
        ball = Domain.ball((0.0, 0.0), 1.0)
        drift = DriftCatalog.build({'name': 'constant', 'vector': [1.0, 0.0]}, ball)
        with self.assertRaises(DomainError):
            beta_criterion(self.params, drift, ball, 0.8, 0.1, probes=np.array([[5.0, 0.0]]))
        with self.assertRaises(DomainError):
            kato_modulus(self.params, drift, ball, 0.1, probes=np.array([[5.0, 0.0]]))

    def test_whole_space_modulus_of_a_drift_vanishing_outside(self):
        """For b supported in D the global and the local modulus coincide."""
        ball = Domain.ball((0.0, 0.0), 1.0)
        bump = DriftCatalog.build({'name': 'smooth_compact', 'center': [0.0, 0.0],
                                   'radius': 0.5, 'vector': [1.0, 0.0]}, ball)
        probes = np.array([[0.0, 0.0], [0.3, 0.1]])
        for r in (0.2, 1.5):
            local = kato_modulus(self.params, bump, ball, r, probes=probes, n_angles=16)
            whole = kato_modulus(self.params, bump, ball, r, probes=probes, n_angles=16,
                                 whole_space=True)
            self.assertAlmostEqual(whole / local, 1.0, places=6)


LOOSE_QUAD = QuadratureConfig(rel_tol=1e-6, abs_tol=1e-12, limit=400)


class TestCoVanishing(unittest.TestCase):
    def setUp(self):
        """Set up the unit ball with singular drifts on both sides of the threshold."""
        self.params = StableParams(d=2, alpha=1.5)
        self.ball = Domain.ball((0.0, 0.0), 1.0)
        self.weak = DriftCatalog.build({'name': 'singular', 'pole': [0.0, 0.0], 'power': 0.25},
                                       self.ball)
        self.strong = DriftCatalog.build({'name': 'singular', 'pole': [0.0, 0.0], 'power': 0.75},
                                         self.ball)

    def test_sample_points_follow_the_pole(self):
        probes = scaled_probes(self.strong, self.ball, 0.01)
        # the centre is the pole and is dropped
        self.assertEqual(len(probes), 1)
        self.assertAlmostEqual(float(np.linalg.norm(probes[0])), 0.005)
        constant = DriftCatalog.build({'name': 'constant', 'vector': [1.0, 0.0]}, self.ball)
        np.testing.assert_array_equal(scaled_probes(constant, self.ball, 0.01), ORIGIN)

    def test_decay_slope(self):
        scales = [0.1, 0.01, 0.001]
        self.assertAlmostEqual(decay_slope(scales, [s ** 0.5 for s in scales]), 0.5)
        self.assertAlmostEqual(decay_slope(scales, [s ** -0.25 for s in scales]), -0.25)
        self.assertTrue(math.isinf(decay_slope(scales, [1.0, 0.5, 0.0])))

    def test_drift_in_the_class_vanishes(self):
        result = co_vanishing(self.params, self.weak, self.ball, beta=2.0 / 3.0, eps=0.05,
                              k_max=3, quad=LOOSE_QUAD, n_angles=16)
        self.assertGreater(result['kato_slope'], 0.05)
        self.assertTrue(result['kato_vanishes'])
        self.assertTrue(result['beta_vanishes'])
        self.assertTrue(result['consistent'])

    def test_drift_outside_the_class_does_not_vanish(self):
        result = co_vanishing(self.params, self.strong, self.ball, beta=2.0 / 3.0, eps=0.05,
                              k_max=3, quad=LOOSE_QUAD, n_angles=16)
        self.assertLess(result['kato_slope'], 0.0)
        self.assertFalse(result['kato_vanishes'])
        self.assertFalse(result['beta_vanishes'])
        self.assertTrue(result['consistent'])
        self.assertTrue(all(a < b for a, b in zip(result['kato'], result['kato'][1:])))


def test_reference_drifts_cover_the_catalog():
    ball = Domain.ball((0.0, 0.0), 1.0)
    drifts = DriftCatalog.reference_drifts(ball, 1.5)
    names = [b.description for b in drifts]
    assert names == ['zero', 'constant', 'smooth_compact', 'singular', 'singular']
    assert [DriftCatalog.in_kato_class(b, 1.5) for b in drifts] == [True] * 4 + [False]
    assert DriftCatalog.in_kato_class(drifts[-1].capped(10.0), 1.5)


@pytest.mark.slow
def test_catalog_equivalence_on_the_ball():
    from src.verify.checks import check_kato_catalog
    params = StableParams(d=2, alpha=1.5)
    ball = Domain.ball((0.0, 0.0), 1.0)
    drifts = DriftCatalog.reference_drifts(ball, params.alpha)
    expected = [DriftCatalog.in_kato_class(b, params.alpha) for b in drifts]
    report = check_kato_catalog(params, ball, drifts, expected, k_max=3)
    assert report.check_id == 'kato_catalog'
    assert report.n_samples == 5
    assert report.statistic == 0.0
    assert report.passed
    rows = report.details['drifts']
    assert not rows[-1]['kato_vanishes'] and not rows[-1]['beta_vanishes']
