"""
Analysis module for drift moduli, envelope inequalities and fitted constants.
"""

from .kato import DriftField, kato_modulus, beta_criterion, constant_drift_modulus, co_vanishing
from .constant_fit import ConstantStore, ConstantVerdict, FittedConstant
from .envelope import EnvelopeParams, q_tilde, q_envelope, sweep

__all__ = [
    'DriftField',
    'kato_modulus',
    'beta_criterion',
    'constant_drift_modulus',
    'co_vanishing',
    'ConstantStore',
    'ConstantVerdict',
    'FittedConstant',
    'EnvelopeParams',
    'q_tilde',
    'q_envelope',
    'sweep',
]
