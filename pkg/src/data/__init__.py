"""
Run records: check reports, experiment configuration and run storage.
"""

from .models import CheckReport, CheckStatus, Rule, ratio_report, PROVENANCES
from .storage import RunStorage, load_manifest, manifest_hash, summary_table
from .experiment_config import (
    ExperimentConfig,
    GridSettings,
    MonteCarloSettings,
    SeriesSettings,
    CheckSpec,
)

__all__ = [
    'CheckReport',
    'CheckStatus',
    'Rule',
    'ratio_report',
    'PROVENANCES',
    'RunStorage',
    'load_manifest',
    'manifest_hash',
    'summary_table',
    'ExperimentConfig',
    'GridSettings',
    'MonteCarloSettings',
    'SeriesSettings',
    'CheckSpec',
]
