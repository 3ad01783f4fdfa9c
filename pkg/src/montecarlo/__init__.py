"""
Monte Carlo oracle: killed stable paths, histogram densities and the
fitted ratio surface.
"""

from .sampling import (
    block_generators,
    one_sided_stable,
    stable_increments,
    sample_subordinator,
    sample_stable_increment,
)
from .paths import (
    PathConfig,
    KilledPath,
    DensityEstimate,
    SurvivalEstimate,
    simulate_killed_path,
    simulate_killed_paths,
    estimate_density,
    estimate_survival,
    cap_sequence_survival,
    estimate_semigroup,
    wilson_interval,
)
from .surface import RatioSurface

__all__ = [
    'block_generators',
    'one_sided_stable',
    'stable_increments',
    'sample_subordinator',
    'sample_stable_increment',
    'PathConfig',
    'KilledPath',
    'DensityEstimate',
    'SurvivalEstimate',
    'simulate_killed_path',
    'simulate_killed_paths',
    'estimate_density',
    'estimate_survival',
    'cap_sequence_survival',
    'estimate_semigroup',
    'wilson_interval',
    'RatioSurface',
]
