"""Unit tests for the RunStorage class and manifest loading."""

import json
import os
import shutil
import tempfile
import unittest

import pandas as pd

from src.data.models import CheckReport, Rule
from src.data.storage import (MANIFEST_FORMAT, RunStorage, load_manifest, manifest_hash,
                              summary_table)
from src.errors import ManifestError


def _reports():
    return [
        CheckReport('two_sided', 'series', statistic=3.0, tolerance=100.0, n_samples=40,
                    fitted_constant=3.0, details={'t': [0.1, 0.2], 'ratio': [2.0, 3.0]}),
        CheckReport('classical_3p', 'quadrature', statistic=float('inf'), tolerance=0.0,
                    rule=Rule.REPORT_ONLY),
    ]


class TestRunStorage(unittest.TestCase):
    def setUp(self):
        """Set up a storage in a fresh directory."""
        self.test_dir = tempfile.mkdtemp()
        self.storage = RunStorage(self.test_dir, 'abc123def456')

    def tearDown(self):
        """Clean up test files."""
        shutil.rmtree(self.test_dir, ignore_errors=True)

    def test_file_names_carry_the_hash_prefix(self):
        names = self.storage.write_details(_reports())
        self.assertEqual(sorted(names), ['abc123def456_classical_3p.csv',
                                         'abc123def456_two_sided.csv'])
        self.assertTrue(os.path.exists(self.storage.db_path))
        self.assertTrue(os.path.basename(self.storage.db_path).startswith('abc123def456_'))

    def test_list_details_become_columns(self):
        self.storage.write_details(_reports())
        frame = pd.read_csv(self.storage.path('two_sided', 'csv'))
        self.assertEqual(list(frame.columns), ['check_id', 't', 'ratio'])
        self.assertEqual(len(frame), 2)

    def test_reports_are_appended(self):
        self.storage.append_reports(_reports())
        self.storage.append_reports(_reports()[:1])
        history = self.storage.report_history('two_sided')
        self.assertEqual(len(history), 2)
        self.assertEqual(history[0]['passed'], 1)
        self.assertIsNone(self.storage.report_history('classical_3p')[0]['statistic'])

    def test_manifest_round_trip(self):
        manifest = {'format': MANIFEST_FORMAT, 'config_hash': 'abc123def456' + '0' * 52,
                    'reports': [r.to_dict() for r in _reports()], 'overall_pass': True}
        path = self.storage.write_manifest(manifest)
        self.assertTrue(path.endswith('abc123def456_manifest.json'))
        loaded = load_manifest(self.test_dir)
        self.assertEqual([r.check_id for r in loaded['reports']], ['two_sided', 'classical_3p'])
        self.assertEqual(loaded['reports'][1].statistic, float('inf'))
        with open(path) as f:
            self.assertEqual(manifest_hash(json.load(f)), manifest_hash(manifest))

    def test_summary_table(self):
        table = summary_table(_reports())
        self.assertEqual(list(table['check_id']), ['classical_3p', 'two_sided'])
        self.assertEqual(list(table['status']), ['REPORTED', 'PASS'])
        self.assertEqual(list(table.columns), ['check_id', 'provenance', 'fitted_constant',
                                               'statistic', 'tolerance', 'status'])


class TestLoadManifest(unittest.TestCase):
    def setUp(self):
        """Set up an empty run directory."""
        self.test_dir = tempfile.mkdtemp()

    def tearDown(self):
        """Clean up test files."""
        shutil.rmtree(self.test_dir, ignore_errors=True)

    def test_missing_directory(self):
        with self.assertRaises(ManifestError):
            load_manifest(os.path.join(self.test_dir, 'absent'))

    def test_directory_without_manifest(self):
        with self.assertRaises(ManifestError):
            load_manifest(self.test_dir)

    def test_foreign_json(self):
        path = os.path.join(self.test_dir, 'x_manifest.json')
        with open(path, 'w') as f:
            json.dump({'format': 'something-else'}, f)
        with self.assertRaises(ManifestError):
            load_manifest(path)

    def test_several_manifests(self):
        for prefix in ('a', 'b'):
            with open(os.path.join(self.test_dir, f'{prefix}_manifest.json'), 'w') as f:
                json.dump({'format': MANIFEST_FORMAT, 'reports': []}, f)
        with self.assertRaises(ManifestError):
            load_manifest(self.test_dir)
