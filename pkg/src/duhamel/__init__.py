"""
Duhamel series for the drift-perturbed kernel: grids, tabulated fields,
base kernels and the Picard iteration.
"""

from .grid import GridSpec, SpectralLattice, graded_time_rule
from .field import KernelField
from .sources import (
    BaseKernel,
    EnvelopeKernel,
    MonteCarloKernel,
    make_kernel,
    tabulate_base_kernel,
)
from .series import (
    DuhamelOperator,
    SeriesDiagnostics,
    picard_step,
    picard_step_adjoint,
    contraction_estimate,
    gradient_contraction_estimate,
    contraction_horizon,
    sum_series,
    gradient_series,
    dual_duhamel_check,
    compare_recursions,
    sum_source_series,
    SemigroupSeries,
)

__all__ = [
    'GridSpec',
    'SpectralLattice',
    'graded_time_rule',
    'KernelField',
    'BaseKernel',
    'EnvelopeKernel',
    'MonteCarloKernel',
    'make_kernel',
    'tabulate_base_kernel',
    'DuhamelOperator',
    'SeriesDiagnostics',
    'picard_step',
    'picard_step_adjoint',
    'contraction_estimate',
    'gradient_contraction_estimate',
    'contraction_horizon',
    'sum_series',
    'gradient_series',
    'dual_duhamel_check',
    'compare_recursions',
    'sum_source_series',
    'SemigroupSeries',
]
