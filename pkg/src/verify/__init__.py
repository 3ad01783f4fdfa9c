"""
Verification harness: checks of the kernel's claimed properties and the
orchestrator that runs them for an experiment configuration.
"""

from .checks import (
    check_chapman_kolmogorov,
    check_two_sided,
    check_gradient_bound,
    check_harnack,
    check_semigroup_side_conditions,
    check_translation_oracle,
    harnack_factor,
)
from .harness import REGISTRY, THEOREM_ITEMS, RunInputs, coverage, run_checks, run_experiment

__all__ = [
    'check_chapman_kolmogorov',
    'check_two_sided',
    'check_gradient_bound',
    'check_harnack',
    'check_semigroup_side_conditions',
    'check_translation_oracle',
    'harnack_factor',
    'REGISTRY',
    'THEOREM_ITEMS',
    'RunInputs',
    'coverage',
    'run_checks',
    'run_experiment',
]
