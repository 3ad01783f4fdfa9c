"""
Drift catalog and smooth test functions shared by checks and tests.
"""

from .drift_catalog import DriftCatalog, zero_drift, constant_drift
from .test_functions import bump, plateau, translated

__all__ = ['DriftCatalog', 'zero_drift', 'constant_drift', 'bump', 'plateau', 'translated']
