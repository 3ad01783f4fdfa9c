import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, Optional

import numpy as np

PROVENANCES = ('quadrature', 'series', 'mc', 'surrogate')


class CheckStatus(Enum):
    """Outcome of a check."""
    PASS = "PASS"
    FAIL = "FAIL"
    REPORTED = "REPORTED"


class Rule(Enum):
    """How the recorded statistic is compared with the tolerance."""
    AT_MOST = "at_most"
    AT_LEAST = "at_least"
    FINITE = "finite"
    REPORT_ONLY = "report_only"


def _clean(value: Any) -> Any:
    """Convert numpy scalars and arrays to JSON-friendly values."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return str(value)
    return value


def _restore(value: Any) -> Any:
    if isinstance(value, str) and value in ('inf', '-inf', 'nan'):
        return float(value)
    return value


@dataclass
class CheckReport:
    """
    Structured record of one inequality or identity check.

    The pass flag is derived from (statistic, tolerance, rule) only, so a
    report read back from disk reproduces its verdict.
    """
    check_id: str
    provenance: str
    statistic: float
    tolerance: float
    rule: Rule = Rule.AT_MOST
    n_samples: int = 1
    lhs_max: Optional[float] = None
    lhs_min: Optional[float] = None
    rhs_max: Optional[float] = None
    rhs_min: Optional[float] = None
    max_ratio: Optional[float] = None
    min_ratio: Optional[float] = None
    argmax_sample: Optional[Dict[str, Any]] = None
    fitted_constant: Optional[float] = None
    excluded: int = 0
    params: Dict[str, Any] = field(default_factory=dict)
    inputs: Dict[str, Any] = field(default_factory=dict)
    details: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        """Validate provenance and rule after initialization."""
        if self.provenance not in PROVENANCES:
            raise ValueError(f"Provenance '{self.provenance}' not one of {PROVENANCES}")
        if isinstance(self.rule, str):
            self.rule = Rule(self.rule)
        if self.n_samples < 0:
            raise ValueError(f"Sample count {self.n_samples} must be non-negative")

    @property
    def passed(self) -> bool:
        if self.rule is Rule.REPORT_ONLY:
            return True
        if self.statistic is None or not np.isfinite(self.statistic):
            return False
        if self.rule is Rule.FINITE:
            return True
        if self.rule is Rule.AT_MOST:
            return self.statistic <= self.tolerance
        return self.statistic >= self.tolerance

    @property
    def status(self) -> CheckStatus:
        if self.rule is Rule.REPORT_ONLY:
            return CheckStatus.REPORTED
        return CheckStatus.PASS if self.passed else CheckStatus.FAIL

    @property
    def is_surrogate(self) -> bool:
        return self.provenance == 'surrogate'

    def to_dict(self) -> Dict[str, Any]:
        """Convert the report to dictionary format."""
        return _clean({
            'check_id': self.check_id,
            'provenance': self.provenance,
            'statistic': self.statistic,
            'tolerance': self.tolerance,
            'rule': self.rule.value,
            'n_samples': self.n_samples,
            'lhs_max': self.lhs_max,
            'lhs_min': self.lhs_min,
            'rhs_max': self.rhs_max,
            'rhs_min': self.rhs_min,
            'max_ratio': self.max_ratio,
            'min_ratio': self.min_ratio,
            'argmax_sample': self.argmax_sample,
            'fitted_constant': self.fitted_constant,
            'excluded': self.excluded,
            'params': self.params,
            'inputs': self.inputs,
            'details': self.details,
            'pass': self.passed,
            'status': self.status.value,
        })

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'CheckReport':
        """Create a CheckReport from its dictionary form (derived keys are ignored)."""
        data = {k: v for k, v in data.items() if k not in ('pass', 'status')}
        for key in ('statistic', 'tolerance', 'lhs_max', 'lhs_min', 'rhs_max',
                    'rhs_min', 'max_ratio', 'min_ratio', 'fitted_constant'):
            if key in data:
                data[key] = _restore(data[key])
        return cls(**data)


def ratio_report(check_id: str, provenance: str, lhs, rhs,
                 sample_at: Optional[Callable[[int], Dict[str, Any]]] = None,
                 tolerance: float = np.inf, rule: Rule = Rule.FINITE,
                 **kwargs) -> CheckReport:
    """
    Build a report from paired lhs/rhs arrays with statistic = max(lhs/rhs).

    Pairs with a vanishing right side or a non-finite ratio are excluded and
    counted; sample_at(i) describes sample i for the argmax record.
    """
    lhs = np.atleast_1d(np.asarray(lhs, dtype=float))
    rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
    ratio = np.full(lhs.shape, np.nan)
    np.divide(lhs, rhs, out=ratio, where=rhs > 0.0)
    valid = np.isfinite(ratio)
    excluded = int((~valid).sum())
    if excluded:
        logging.warning(f"{check_id}: {excluded} of {len(ratio)} samples excluded")
    if not valid.any():
        return CheckReport(check_id=check_id, provenance=provenance, statistic=float('nan'),
                           tolerance=tolerance, rule=rule, n_samples=len(ratio),
                           excluded=excluded, **kwargs)
    idx = np.flatnonzero(valid)
    best = int(idx[np.argmax(ratio[idx])])
    top = float(ratio[best])
    return CheckReport(
        check_id=check_id,
        provenance=provenance,
        statistic=top,
        tolerance=tolerance,
        rule=rule,
        n_samples=len(ratio),
        lhs_max=float(lhs[idx].max()), lhs_min=float(lhs[idx].min()),
        rhs_max=float(rhs[idx].max()), rhs_min=float(rhs[idx].min()),
        max_ratio=top, min_ratio=float(ratio[idx].min()),
        argmax_sample=sample_at(best) if sample_at else None,
        fitted_constant=top,
        excluded=excluded,
        **kwargs,
    )
