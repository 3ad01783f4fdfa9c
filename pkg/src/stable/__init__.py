"""
Free isotropic alpha-stable kernel, comparison functions and the fractional Laplacian.
"""

from .params import StableParams, SpaceTimePoint, QuadratureConfig, TestFunction
from .kernel import (
    eval_free_kernel,
    eval_free_kernel_gradient,
    eval_rho_gamma,
    subordinator_density,
    levy_constant,
    kernel_at_origin,
    cauchy_kernel,
    cauchy_kernel_gradient,
    free_kernel_fourier_bessel,
)
from .profile import RadialProfile, profile_for
from .laplacian import frac_laplacian_apply, frac_laplacian_spectral

__all__ = [
    'StableParams',
    'SpaceTimePoint',
    'QuadratureConfig',
    'TestFunction',
    'eval_free_kernel',
    'eval_free_kernel_gradient',
    'eval_rho_gamma',
    'subordinator_density',
    'levy_constant',
    'kernel_at_origin',
    'cauchy_kernel',
    'cauchy_kernel_gradient',
    'free_kernel_fourier_bessel',
    'RadialProfile',
    'profile_for',
    'frac_laplacian_apply',
    'frac_laplacian_spectral',
]
