import json
import logging
import os
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional, Tuple

DEFAULT_SLACK = 1.5


class ConstantVerdict(Enum):
    """Outcome of comparing a fitted constant with its stored value."""
    NEW = "NEW"
    STABLE = "STABLE"
    EXCEEDED = "EXCEEDED"


@dataclass
class FittedConstant:
    """Data class for a constant fitted as the max ratio over a sample suite."""
    check_id: str
    key: str
    value: float
    n_samples: int


def constant_key(check_id: str, d: int, alpha: float, domain_kind: str) -> str:
    """Stored constants are indexed per (check, dimension, alpha, domain kind)."""
    return f"{check_id}|d={d}|alpha={alpha:g}|{domain_kind}"


def refinement_stable(coarse: float, fine: float, slack: float = DEFAULT_SLACK) -> bool:
    """True when two fitted constants differ by less than the slack factor."""
    if not (coarse > 0.0 and fine > 0.0):
        return coarse == fine
    return max(coarse, fine) / min(coarse, fine) < slack


class ConstantStore:
    """Stored fitted constants, compared against later runs with a slack factor."""

    def __init__(self, slack: float = DEFAULT_SLACK):
        """Initialize an empty store."""
        if slack < 1.0:
            raise ValueError(f"Slack {slack} must be at least 1")
        self.slack = slack
        self.constants: Dict[str, Dict[str, Any]] = {}

    def load_constants_from_json(self, file_path: str) -> None:
        """Load stored constants from a JSON file."""
        try:
            with open(file_path, 'r') as f:
                self.constants = json.load(f)
        except FileNotFoundError:
            logging.warning(f"Warning: {file_path} not found.")
            self.constants = {}

    def save_constants_to_json(self, file_path: str) -> None:
        """Write the stored constants to a JSON file."""
        directory = os.path.dirname(file_path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(file_path, 'w') as f:
            json.dump(self.constants, f, indent=2, sort_keys=True)

    def get_constant(self, key: str) -> Optional[float]:
        try:
            return float(self.constants[key]['value'])
        except KeyError:
            return None

    def compare(self, fitted: FittedConstant) -> Tuple[ConstantVerdict, Optional[float]]:
        """
        Compare a fitted constant with the stored one.

        Returns:
            (verdict, stored value or None)
        """
        stored = self.get_constant(fitted.key)
        if stored is None:
            return ConstantVerdict.NEW, None
        if fitted.value > self.slack * stored:
            logging.warning(f"{fitted.check_id}: fitted constant {fitted.value:.4g} exceeds "
                            f"stored {stored:.4g} by more than {self.slack}x")
            return ConstantVerdict.EXCEEDED, stored
        return ConstantVerdict.STABLE, stored

    def record(self, fitted: FittedConstant) -> ConstantVerdict:
        """Compare, then keep the larger of the stored and fitted values."""
        verdict, stored = self.compare(fitted)
        if verdict is not ConstantVerdict.EXCEEDED:
            value = fitted.value if stored is None else max(stored, fitted.value)
            self.constants[fitted.key] = {'check_id': fitted.check_id, 'value': value,
                                          'n_samples': fitted.n_samples}
        return verdict
