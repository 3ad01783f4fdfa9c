"""
Run storage: manifest JSON, CSV detail tables and an append-only SQLite log
of every report written for a configuration.

Every file name starts with the configuration hash prefix.
"""

import hashlib
import json
import logging
import os
import sqlite3
from contextlib import contextmanager
from datetime import datetime
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd

from src.data.models import CheckReport
from src.errors import ManifestError

logger = logging.getLogger(__name__)

MANIFEST_FORMAT = 'run-manifest/1'
MANIFEST_SUFFIX = '_manifest.json'
SUMMARY_COLUMNS = ['check_id', 'provenance', 'fitted_constant', 'statistic', 'tolerance', 'status']


def canonical_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(',', ':'))


def manifest_hash(manifest: Dict[str, Any]) -> str:
    """sha256 of the canonical manifest text."""
    return hashlib.sha256(canonical_json(manifest).encode('utf-8')).hexdigest()


def _details_frame(report: CheckReport) -> pd.DataFrame:
    """Tidy detail table: list-valued details become columns, scalars a single row."""
    columns = {k: v for k, v in report.to_dict()['details'].items() if isinstance(v, list)}
    lengths = {len(v) for v in columns.values()}
    if columns and len(lengths) == 1:
        frame = pd.DataFrame({k: [json.dumps(x) if isinstance(x, (list, dict)) else x for x in v]
                              for k, v in columns.items()})
    else:
        frame = pd.DataFrame([{k: (json.dumps(v) if isinstance(v, (list, dict)) else v)
                               for k, v in report.to_dict().items()
                               if k not in ('params', 'inputs', 'details')}])
    frame.insert(0, 'check_id', report.check_id)
    return frame


class RunStorage:
    """Files of one run inside an output directory."""

    def __init__(self, output_dir: str, hash_prefix: str):
        """Initialize the storage and create the output directory."""
        self.output_dir = output_dir
        self.hash_prefix = hash_prefix
        os.makedirs(output_dir, exist_ok=True)
        self.db_path = self.path('reports', 'db')
        self._create_tables()

    def path(self, name: str, ext: str) -> str:
        return os.path.join(self.output_dir, f"{self.hash_prefix}_{name}.{ext}")

    @contextmanager
    def _get_connection(self):
        """Context manager for database connections."""
        conn = sqlite3.connect(self.db_path)
        conn.row_factory = sqlite3.Row
        try:
            yield conn
        finally:
            conn.close()

    def _create_tables(self) -> None:
        with self._get_connection() as conn:
            conn.execute("""
                CREATE TABLE IF NOT EXISTS reports (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    check_id TEXT NOT NULL,
                    provenance TEXT NOT NULL,
                    statistic REAL,
                    tolerance REAL,
                    passed INTEGER NOT NULL,
                    payload TEXT NOT NULL,
                    created_at TIMESTAMP NOT NULL
                )
            """)
            conn.execute("""
                CREATE TABLE IF NOT EXISTS runs (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    manifest_hash TEXT NOT NULL,
                    overall_pass INTEGER NOT NULL,
                    created_at TIMESTAMP NOT NULL
                )
            """)
            conn.commit()

    def append_reports(self, reports: Sequence[CheckReport]) -> None:
        """Reports are only ever appended; earlier rows stay untouched."""
        now = datetime.now().isoformat()
        with self._get_connection() as conn:
            conn.executemany("""
                INSERT INTO reports (check_id, provenance, statistic, tolerance, passed,
                                     payload, created_at)
                VALUES (?, ?, ?, ?, ?, ?, ?)
            """, [(r.check_id, r.provenance, _finite_or_none(r.statistic),
                   _finite_or_none(r.tolerance), int(r.passed),
                   canonical_json(r.to_dict()), now) for r in reports])
            conn.commit()

    def report_history(self, check_id: str) -> List[Dict[str, Any]]:
        """Every stored report for one check, oldest first."""
        with self._get_connection() as conn:
            rows = conn.execute("""
                SELECT check_id, provenance, statistic, tolerance, passed, created_at
                FROM reports WHERE check_id = ? ORDER BY id
            """, (check_id,)).fetchall()
            return [dict(row) for row in rows]

    def write_details(self, reports: Sequence[CheckReport]) -> List[str]:
        names = []
        for report in reports:
            target = self.path(report.check_id, 'csv')
            _details_frame(report).to_csv(target, index=False)
            names.append(os.path.basename(target))
        return names

    def write_frame(self, name: str, frame: pd.DataFrame) -> str:
        target = self.path(name, 'csv')
        frame.to_csv(target, index=False)
        return os.path.basename(target)

    def write_manifest(self, manifest: Dict[str, Any]) -> str:
        """Write the manifest and log its hash in the runs table."""
        target = self.path('manifest', 'json')
        with open(target, 'w') as f:
            json.dump(manifest, f, indent=2, sort_keys=True)
        digest = manifest_hash(manifest)
        with self._get_connection() as conn:
            conn.execute("INSERT INTO runs (manifest_hash, overall_pass, created_at) VALUES (?, ?, ?)",
                         (digest, int(manifest['overall_pass']), datetime.now().isoformat()))
            conn.commit()
        logger.info(f"Manifest {os.path.basename(target)} written (sha256 {digest[:12]})")
        return target


def _finite_or_none(value: Optional[float]) -> Optional[float]:
    if value is None:
        return None
    value = float(value)
    return value if value == value and abs(value) != float('inf') else None


def find_manifest(run_dir: str) -> str:
    """The single manifest of a run directory."""
    if not os.path.isdir(run_dir):
        raise ManifestError(f"Run directory {run_dir} does not exist")
    found = sorted(name for name in os.listdir(run_dir) if name.endswith(MANIFEST_SUFFIX))
    if not found:
        raise ManifestError(f"No manifest in {run_dir}")
    if len(found) > 1:
        raise ManifestError(f"Several manifests in {run_dir}: {found}; pass the file itself")
    return os.path.join(run_dir, found[0])


def load_manifest(path: str) -> Dict[str, Any]:
    """Read a manifest (a run directory or the file itself)."""
    if os.path.isdir(path):
        path = find_manifest(path)
    try:
        with open(path, 'r') as f:
            manifest = json.load(f)
    except FileNotFoundError:
        raise ManifestError(f"Manifest {path} not found")
    except (OSError, json.JSONDecodeError) as e:
        raise ManifestError(f"Manifest {path} is unreadable: {e}")
    if not isinstance(manifest, dict) or manifest.get('format') != MANIFEST_FORMAT:
        raise ManifestError(f"{path} is not a run manifest")
    try:
        manifest['reports'] = [CheckReport.from_dict(r) for r in manifest['reports']]
    except (KeyError, TypeError, ValueError) as e:
        raise ManifestError(f"Manifest {path} has malformed reports: {e}")
    return manifest


def summary_table(reports: Sequence[CheckReport]) -> pd.DataFrame:
    """One row per check in check_id order, fixed columns."""
    rows = [{'check_id': r.check_id, 'provenance': r.provenance,
             'fitted_constant': r.fitted_constant, 'statistic': r.statistic,
             'tolerance': r.tolerance, 'status': r.status.value}
            for r in sorted(reports, key=lambda r: r.check_id)]
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)
