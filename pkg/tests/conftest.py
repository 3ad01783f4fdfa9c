"""
Shared test fixtures for the kernel, series and harness tests.
"""

import pytest

from src.duhamel.grid import GridSpec
from src.geometry.domain import Domain
from src.stable.params import QuadratureConfig, StableParams
from src.utils.drift_catalog import DriftCatalog


@pytest.fixture
def params():
    """The reference regime d = 2, alpha = 1.5."""
    return StableParams(d=2, alpha=1.5)


@pytest.fixture
def quad():
    """Quadrature accuracy loose enough for quick tests."""
    return QuadratureConfig(rel_tol=1e-7, abs_tol=1e-13)


@pytest.fixture
def whole_space():
    return Domain.whole_space(2)


@pytest.fixture
def unit_ball():
    return Domain.ball((0.0, 0.0), 1.0)


@pytest.fixture
def upper_half_plane():
    return Domain.half_space((0.0, 1.0), 0.0)


@pytest.fixture
def small_grid_factory(params):
    """Factory for coarse grids: a few hundred nodes and short horizons."""
    def create_grid(domain, half_width=1.5, spacing=0.125, horizon=0.0625, n_times=5):
        return GridSpec.build(params, domain, half_width=half_width, spacing=spacing,
                              horizon=horizon, n_times=n_times, t_min_fraction=2.0 ** -4,
                              n_panels=4, gl_order=3, eps_tail=1.0)
    return create_grid


@pytest.fixture
def drift_factory():
    """Build catalog drifts by name on a given domain."""
    def create_drift(domain, name='zero', **parameters):
        return DriftCatalog.build({'name': name, **parameters}, domain)
    return create_drift


@pytest.fixture
def minimal_config_data():
    """A valid whole-space configuration mapping with zero drift."""
    return {
        'params': {'d': 2, 'alpha': 1.5},
        'domain': None,
        'drift': {'name': 'zero'},
        'grid': {'half_width': 1.5, 'spacing': 0.125, 'horizon': 0.0625, 'n_times': 5,
                 't_min_fraction': 0.0625, 'n_panels': 4, 'gl_order': 3, 'eps_tail': 1.0},
        'checks': ['free_scaling', 'chapman_kolmogorov'],
        'targets': [[0.0, 0.0], [0.25, 0.0]],
    }
