"""Unit tests for the Duhamel grid, kernel fields and the perturbation series."""

import os
import tempfile

import numpy as np
import pytest

from src.duhamel.field import KernelField
from src.duhamel.grid import GridSpec, graded_time_rule
from src.duhamel.series import (DuhamelOperator, SemigroupSeries, contraction_horizon,
                                dual_duhamel_check, sum_series, sum_source_series)
from src.duhamel.sources import BaseKernel, EnvelopeKernel, make_kernel, tabulate_base_kernel
from src.errors import ContractError, DomainError
from src.stable.profile import profile_for


@pytest.fixture
def free_base(params, whole_space, small_grid_factory):
    """Free kernel tabulated on a coarse whole-plane grid, anchored at the origin."""
    grid = small_grid_factory(whole_space)
    return tabulate_base_kernel(BaseKernel(params, whole_space), grid, [0.0, 0.0])


def test_graded_rule_weights_and_singular_integrand():
    nodes, weights = graded_time_rule(0.5, 1.5)
    assert weights.sum() == pytest.approx(0.5, rel=1e-12)
    assert np.all((nodes > 0.0) & (nodes < 0.5))
    # int_0^t s^(-1/alpha) ds = 3 t^(1/3) for alpha = 1.5
    assert np.sum(weights * nodes ** (-2.0 / 3.0)) == pytest.approx(3.0 * 0.5 ** (1.0 / 3.0),
                                                                   rel=2e-2)
    with pytest.raises(DomainError):
        graded_time_rule(0.0, 1.5)


def test_grid_times_are_geometric(whole_space, small_grid_factory):
    grid = small_grid_factory(whole_space)
    assert grid.horizon == pytest.approx(0.0625)
    assert np.allclose(grid.times[1:] / grid.times[:-1], 2.0)
    assert grid.resolved_times()[-1]
    assert grid.spacing == pytest.approx(0.125)


def test_grid_refinement(whole_space, small_grid_factory):
    grid = small_grid_factory(whole_space)
    finer_time = grid.refined('time')
    assert finer_time.n_panels == 2 * grid.n_panels
    assert len(finer_time.nodes) == len(grid.nodes)
    finer_space = grid.refined('space')
    assert finer_space.spacing == pytest.approx(grid.spacing / 2.0)
    assert len(finer_space.nodes) > len(grid.nodes)
    with pytest.raises(DomainError):
        grid.refined('both')


def test_grid_on_ball_keeps_interior_nodes(unit_ball, small_grid_factory):
    grid = small_grid_factory(unit_ball)
    assert np.all(unit_ball.contains(grid.points))
    assert np.linalg.norm(grid.points[grid.node_index([0.0, 0.0])]) <= grid.spacing


def test_invalid_grid_settings(params, whole_space):
    with pytest.raises(DomainError):
        GridSpec.build(params, whole_space, horizon=0.0)
    with pytest.raises(DomainError):
        GridSpec.build(params, whole_space, n_times=1)


def test_tabulated_free_kernel(params, free_base):
    assert free_base.meta['symmetric']
    assert free_base.meta['source'] == 'free'
    assert free_base.values.min() > 0.0
    grid = free_base.grid
    t = float(grid.times[-1])
    index = grid.node_index([0.25, 0.0])
    expected = profile_for(params).kernel(t, grid.points[index][None, :] - free_base.anchor)[0]
    assert free_base.value_at(t, grid.points[index]) == pytest.approx(expected, rel=1e-12)


def test_field_time_access(free_base):
    times = free_base.times
    values, grads = free_base.at_time(float(times[2]))
    assert np.array_equal(values, free_base.values[2])
    assert grads.shape == (len(free_base.grid.nodes), 2)
    assert free_base.time_index(float(times[3])) == 3
    with pytest.raises(DomainError):
        free_base.time_index(float(times[3]) * 1.1)
    with pytest.raises(DomainError):
        free_base.at_time(float(times[0]) / 2.0)
    with pytest.raises(DomainError):
        free_base.at_time(float(times[-1]) * 2.0)
    continued, _ = free_base.with_order(1).at_time(float(times[0]) / 2.0)
    assert np.allclose(continued, 0.5 * free_base.values[0])


def test_field_arithmetic(free_base):
    difference = free_base - free_base
    assert np.all(difference.values == 0.0)
    assert difference.signed
    doubled = free_base.scaled(2.0)
    assert np.allclose(doubled.values, 2.0 * free_base.values)
    assert not doubled.signed


def test_field_roles(free_base):
    source = free_base.with_role('source')
    assert source.role == 'source'
    assert not source.has_gradients
    with pytest.raises(ContractError):
        free_base + source
    with pytest.raises(ContractError):
        free_base.scaled(1.0).with_role('source')
    with pytest.raises(ContractError):
        KernelField(grid=free_base.grid, values=free_base.values, anchor_index=0, role='middle')
    with pytest.raises(ContractError):
        KernelField(grid=free_base.grid, values=-free_base.values, anchor_index=0)


def test_field_save_and_load(free_base):
    handle, path = tempfile.mkstemp(suffix='.field')
    os.close(handle)
    try:
        free_base.save(path)
        loaded = KernelField.load(path, free_base.grid)
    finally:
        os.remove(path)
    assert np.array_equal(loaded.values, free_base.values)
    assert np.array_equal(loaded.gradients, free_base.gradients)
    assert loaded.anchor_index == free_base.anchor_index
    assert loaded.label == free_base.label
    assert loaded.meta['symmetric']


def test_field_frame(free_base):
    frame = free_base.to_frame()
    assert list(frame.columns) == ['t', 'x0', 'x1', 'value', 'grad0', 'grad1']
    assert len(frame) == free_base.values.size


def test_envelope_kernel_on_whole_space_is_free(params, whole_space):
    points = np.array([[0.3, 0.1], [-1.0, 0.5]])
    free = BaseKernel(params, whole_space).values(0.05, points, [0.0, 0.0])
    envelope = EnvelopeKernel(params, whole_space).values(0.05, points, [0.0, 0.0])
    assert np.allclose(free, envelope)


def test_envelope_kernel_vanishes_at_the_boundary(params, unit_ball):
    kernel = EnvelopeKernel(params, unit_ball)
    w, grad = kernel.weight(0.01, np.array([[0.0, 0.0], [0.999, 0.0], [1.2, 0.0]]))
    assert w[0] == 1.0
    assert 0.0 < w[1] < 1.0
    assert w[2] == 0.0
    # the weight grows towards the interior
    assert grad[1, 0] < 0.0


def test_make_kernel(params, unit_ball):
    assert make_kernel('envelope', params, unit_ball).provenance == 'surrogate'
    with pytest.raises(ContractError):
        make_kernel('monte_carlo', params, unit_ball)
    with pytest.raises(ContractError):
        make_kernel('exact', params, unit_ball)


def test_zero_drift_series_is_the_base(free_base, whole_space, drift_factory):
    zero = drift_factory(whole_space)
    series, diagnostics = sum_series(free_base, zero)
    assert series is free_base
    assert diagnostics.truncation_index == 0
    assert diagnostics.residual_bound == 0.0
    source = sum_source_series(free_base, zero, n_terms=2)
    assert source.role == 'source'
    assert np.array_equal(source.values, free_base.values)
    assert contraction_horizon(free_base, zero) == (free_base.grid.horizon, 0.0)


def test_series_needs_a_target_field(free_base, whole_space, drift_factory):
    drift = drift_factory(whole_space, 'constant', vector=[0.3, 0.0])
    with pytest.raises(ContractError):
        sum_series(free_base.with_role('source'), drift)
    with pytest.raises(ContractError):
        DuhamelOperator(free_base.scaled(1.0), drift)


@pytest.mark.slow
def test_constant_drift_series_translates_the_kernel(params, free_base, whole_space,
                                                     drift_factory):
    """With b constant the drifted kernel is p(t, y - x - b t)."""
    b = np.array([0.3, 0.0])
    drift = drift_factory(whole_space, 'constant', vector=b.tolist())
    series, diagnostics = sum_series(free_base, drift, k_max=4, tol=1e-6)
    assert 0.0 < diagnostics.c_emp < 1.0
    assert diagnostics.truncation_index >= 1
    assert diagnostics.ratios[-1] < diagnostics.ratios[0]
    grid = free_base.grid
    t = grid.horizon
    anchor = free_base.anchor
    for offset in ([0.25, 0.0], [-0.25, 0.0]):
        index = grid.node_index(anchor + np.array(offset))
        x = grid.points[index]
        exact = profile_for(params).kernel(t, (anchor - x - b * t)[None, :])[0]
        assert series.values[-1, index] == pytest.approx(exact, rel=0.1)


@pytest.mark.slow
def test_dual_duhamel_identity(free_base, whole_space, drift_factory):
    drift = drift_factory(whole_space, 'constant', vector=[0.3, 0.0])
    series, _ = sum_series(free_base, drift, k_max=4, tol=1e-6)
    report = dual_duhamel_check(free_base, series, drift, tolerance=0.05)
    assert report.check_id == 'dual_duhamel'
    assert report.provenance == 'series'
    assert report.passed


@pytest.mark.slow
def test_semigroup_series_without_drift_is_free(free_base, whole_space, drift_factory):
    op = DuhamelOperator(free_base, drift_factory(whole_space))
    f = np.exp(-np.sum(free_base.grid.points ** 2, axis=1))
    semigroup = SemigroupSeries(op, f, n_terms=3)
    assert semigroup.n_terms == 0
    t = free_base.grid.horizon
    assert np.allclose(semigroup.at(t), op.free_semigroup_at(t, f)[0])
    with pytest.raises(DomainError):
        semigroup.at(2.0 * t)
