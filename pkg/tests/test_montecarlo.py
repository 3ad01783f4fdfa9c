"""Unit tests for the stable samplers, killed paths and the ratio surface."""

import os
import tempfile
import unittest

import numpy as np
import pytest

from src.duhamel.sources import make_kernel
from src.errors import ContractError, DomainError, QualityError
from src.geometry.domain import BoxSpec, Domain
from src.montecarlo.paths import (PathConfig, cap_sequence_survival, estimate_density,
                                  estimate_semigroup, estimate_survival, simulate_killed_path,
                                  simulate_killed_paths, wilson_interval)
from src.montecarlo.sampling import (block_generators, one_sided_stable, sample_stable_increment,
                                     sample_subordinator, stable_increments)
from src.montecarlo.surface import RatioSurface
from src.stable.params import StableParams
from src.utils.drift_catalog import DriftCatalog


class TestSampling(unittest.TestCase):
    def setUp(self):
        """Set up the reference parameters and a fixed generator."""
        self.params = StableParams(d=2, alpha=1.5)
        self.rng = np.random.Generator(np.random.Philox(11))

    def test_one_sided_laplace_transform(self):
        """E exp(-S) = exp(-1) for the standard one-sided law."""
        samples = one_sided_stable(0.75, 200_000, self.rng)
        self.assertTrue(np.all(samples > 0.0))
        self.assertAlmostEqual(np.mean(np.exp(-samples)), np.exp(-1.0), delta=0.01)

    def test_characteristic_function(self):
        """E cos(xi . X_1) = exp(-|xi|^alpha)."""
        x = stable_increments(self.params, 1.0, 200_000, self.rng)
        self.assertEqual(x.shape, (200_000, 2))
        self.assertAlmostEqual(np.mean(np.cos(x[:, 0])), np.exp(-1.0), delta=0.01)
        self.assertAlmostEqual(np.mean(np.cos(0.5 * x[:, 1])), np.exp(-0.5 ** 1.5), delta=0.01)

    def test_subordinator_self_similarity(self):
        s = sample_subordinator(0.75, 2.0, self.rng, size=100_000)
        lam = 0.5
        self.assertAlmostEqual(np.mean(np.exp(-lam * s)), np.exp(-2.0 * lam ** 0.75), delta=0.01)

    def test_single_increment_shape(self):
        self.assertEqual(sample_stable_increment(self.params, 0.1, self.rng).shape, (2,))
        self.assertEqual(sample_stable_increment(self.params, 0.1, self.rng, size=5).shape, (5, 2))

    def test_invalid_arguments(self):
        with self.assertRaises(DomainError):
            one_sided_stable(1.0, 10, self.rng)
        with self.assertRaises(DomainError):
            stable_increments(self.params, 0.0, 10, self.rng)
        with self.assertRaises(DomainError):
            sample_subordinator(0.75, -1.0, self.rng)

    def test_block_streams_are_reproducible(self):
        first = [g.standard_normal(3) for g in block_generators(5, 3)]
        second = [g.standard_normal(3) for g in block_generators(5, 3)]
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a, b)
        self.assertFalse(np.allclose(first[0], first[1]))


class TestWilsonInterval(unittest.TestCase):
    def test_interval_brackets_the_proportion(self):
        low, high = wilson_interval(np.array([0, 50, 100]), 100)
        self.assertAlmostEqual(low[0], 0.0, places=12)
        self.assertTrue(low[1] < 0.5 < high[1])
        self.assertAlmostEqual(high[2], 1.0, places=12)
        self.assertTrue(high[0] > 0.0)


class TestKilledPaths(unittest.TestCase):
    def setUp(self):
        """Set up a ball, a zero drift and a small path configuration."""
        self.params = StableParams(d=2, alpha=1.5)
        self.ball = Domain.ball((0.0, 0.0), 1.0)
        self.zero = DriftCatalog.build({'name': 'zero'}, self.ball)
        self.config = PathConfig(dt=0.01, n_paths=2000, block_size=500, seed=3)

    def test_exterior_start_is_killed(self):
        rng = np.random.Generator(np.random.Philox(0))
        positions = simulate_killed_paths(self.params, self.ball, self.zero, [2.0, 0.0],
                                          [0.0, 0.05], 10, 0.01, rng)
        self.assertTrue(np.all(np.isnan(positions)))
        path = simulate_killed_path(self.params, self.ball, self.zero, [2.0, 0.0], 0.05, 0.01, rng)
        self.assertTrue(path.killed)
        self.assertEqual(path.exit_time, 0.0)

    def test_surviving_positions_stay_inside(self):
        rng = np.random.Generator(np.random.Philox(1))
        positions = simulate_killed_paths(self.params, self.ball, self.zero, [0.5, 0.0],
                                          [0.0, 0.05, 0.1], 500, 0.01, rng)
        np.testing.assert_array_equal(positions[0], np.tile([0.5, 0.0], (500, 1)))
        alive = ~np.isnan(positions[2, :, 0])
        self.assertTrue(np.all(self.ball.contains(positions[2][alive])))
        # killed paths stay killed
        self.assertTrue(np.all(alive <= ~np.isnan(positions[1, :, 0])))

    def test_times_must_be_step_multiples(self):
        rng = np.random.Generator(np.random.Philox(0))
        with self.assertRaises(DomainError):
            simulate_killed_paths(self.params, self.ball, self.zero, [0.0, 0.0], [0.015], 10,
                                  0.01, rng)
        with self.assertRaises(DomainError):
            simulate_killed_paths(self.params, self.ball, self.zero, [0.0, 0.0], [0.02, 0.01],
                                  10, 0.01, rng)
        with self.assertRaises(DomainError):
            PathConfig(dt=0.0)
        with self.assertRaises(DomainError):
            PathConfig(n_paths=0)

    def test_block_layout(self):
        config = PathConfig(n_paths=1200, block_size=500)
        self.assertEqual(config.n_blocks, 3)
        self.assertEqual(config.block_sizes(), [500, 500, 200])

    def test_survival_is_nonincreasing_and_worker_free(self):
        times = [0.01, 0.05, 0.1, 0.2]
        one = estimate_survival(self.params, self.ball, self.zero, [0.0, 0.0], times, self.config)
        two = estimate_survival(self.params, self.ball, self.zero, [0.0, 0.0], times,
                                PathConfig(**{**self.config.to_dict(), 'workers': 2}))
        self.assertTrue(np.all(np.diff(one.survival) <= 0.0))
        self.assertTrue(0.0 < one.survival[-1] < 1.0)
        np.testing.assert_array_equal(one.survivors, two.survivors)

    def test_density_estimate(self):
        box = BoxSpec.centered(2, 1.0, 8)
        estimate = estimate_density(self.params, self.ball, self.zero, [0.0, 0.0], [0.05, 0.1],
                                    box, self.config)
        self.assertEqual(estimate.hits.shape, (2, 64))
        np.testing.assert_array_equal(estimate.box_mass, estimate.survival)
        total = estimate.density.sum(axis=1) * estimate.cell_volume
        np.testing.assert_allclose(total, estimate.survival)
        low, high = estimate.confidence_band
        self.assertTrue(np.all(low <= estimate.density + 1e-12))
        self.assertTrue(np.all(estimate.density <= high + 1e-12))
        frame = estimate.to_frame()
        self.assertEqual(len(frame), 128)
        self.assertIn('low_confidence', frame.columns)
        with self.assertRaises(ContractError):
            estimate_density(self.params, self.ball, self.zero, [0.0, 0.0], [0.05],
                             BoxSpec.centered(3, 1.0, 4), self.config)

    def test_cap_sequence_frame(self):
        singular = DriftCatalog.build({'name': 'singular', 'pole': [0.0, 0.0], 'power': 0.5,
                                       'strength': 1.0}, self.ball)
        frame = cap_sequence_survival(self.params, self.ball, singular, [0.5, 0.0], [0.05, 0.1],
                                      [1.0, 10.0], PathConfig(dt=0.01, n_paths=400,
                                                              block_size=200, seed=1))
        self.assertEqual(set(frame.columns), {'label', 't', 'survival', 'ci_low', 'ci_high', 'cap'})
        self.assertEqual(sorted(frame['cap'].unique()), [1.0, 10.0])
        self.assertEqual(len(frame), 4)

    def test_semigroup_of_constant_is_survival(self):
        times = [0.1]
        means, half_widths = estimate_semigroup(self.params, self.ball, self.zero, [0.0, 0.0],
                                                0.1, [lambda x: np.ones(len(x))], self.config)
        survival = estimate_survival(self.params, self.ball, self.zero, [0.0, 0.0], times,
                                     self.config)
        self.assertAlmostEqual(means[0], survival.survival[0], places=12)
        self.assertTrue(half_widths[0] > 0.0)


@pytest.fixture(scope='module')
def ball_estimate():
    """Histogram of killed paths from the centre of the unit disc."""
    params = StableParams(d=2, alpha=1.5)
    ball = Domain.ball((0.0, 0.0), 1.0)
    zero = DriftCatalog.build({'name': 'zero'}, ball)
    config = PathConfig(dt=0.01, n_paths=20_000, block_size=5000, seed=7)
    return params, ball, estimate_density(params, ball, zero, [0.0, 0.0], [0.05, 0.1],
                                          BoxSpec.centered(2, 1.0, 8), config)


def test_surface_fit_and_reload(ball_estimate):
    params, ball, estimate = ball_estimate
    surface = RatioSurface.fit(params, ball, [estimate])
    assert surface.n_cells > 0
    assert np.isfinite(surface.residual)
    handle, path = tempfile.mkstemp(suffix='.joblib')
    os.close(handle)
    try:
        surface.save(path)
        loaded = RatioSurface.load(path)
    finally:
        os.remove(path)
    rho = np.array([0.1, 0.5, 0.9])
    np.testing.assert_allclose(loaded.log_weight(0.05, rho), surface.log_weight(0.05, rho))
    assert loaded.params == params


def test_surface_quality_gate(ball_estimate):
    params, ball, estimate = ball_estimate
    surface = RatioSurface.fit(params, ball, [estimate])
    with pytest.raises(QualityError):
        surface.require_quality(0.0)
    with pytest.raises(QualityError):
        make_kernel('monte_carlo', params, ball, surface, max_rel_ci=0.0)
    kernel = make_kernel('monte_carlo', params, ball, surface, max_rel_ci=1.0)
    assert kernel.provenance == 'mc'
    with pytest.raises(QualityError):
        RatioSurface.fit(params, ball, [estimate], min_hits=10 ** 9)


def test_surface_parameters_must_match(ball_estimate):
    params, ball, estimate = ball_estimate
    surface = RatioSurface.fit(params, ball, [estimate])
    with pytest.raises(ContractError):
        make_kernel('monte_carlo', StableParams(d=2, alpha=1.2), ball, surface, max_rel_ci=1.0)
