"""Unit tests for the ConstantStore class."""

import json
import os
import tempfile
import unittest

from src.analysis.constant_fit import (ConstantStore, ConstantVerdict, FittedConstant,
                                       constant_key, refinement_stable)


class TestConstantStore(unittest.TestCase):
    def setUp(self):
        """Set up a store backed by a temporary JSON file."""
        self.store = ConstantStore(slack=1.5)
        self.key = constant_key('gradient_bound', 2, 1.5, 'ball')
        handle, self.test_json_path = tempfile.mkstemp(suffix='.json')
        os.close(handle)
        with open(self.test_json_path, 'w') as f:
            json.dump({self.key: {'check_id': 'gradient_bound', 'value': 4.0, 'n_samples': 100}}, f)
        self.store.load_constants_from_json(self.test_json_path)

    def tearDown(self):
        """Clean up test files."""
        if os.path.exists(self.test_json_path):
            os.remove(self.test_json_path)

    def test_key_format(self):
        self.assertEqual(self.key, 'gradient_bound|d=2|alpha=1.5|ball')

    def test_get_constant(self):
        self.assertEqual(self.store.get_constant(self.key), 4.0)
        self.assertIsNone(self.store.get_constant('missing'))

    def test_new_constant(self):
        fitted = FittedConstant('two_sided', constant_key('two_sided', 2, 1.5, 'ball'), 2.0, 50)
        self.assertEqual(self.store.record(fitted), ConstantVerdict.NEW)
        self.assertEqual(self.store.get_constant(fitted.key), 2.0)

    def test_within_slack_keeps_the_larger_value(self):
        verdict = self.store.record(FittedConstant('gradient_bound', self.key, 5.5, 100))
        self.assertEqual(verdict, ConstantVerdict.STABLE)
        self.assertEqual(self.store.get_constant(self.key), 5.5)
        self.assertEqual(self.store.record(FittedConstant('gradient_bound', self.key, 1.0, 100)),
                         ConstantVerdict.STABLE)
        self.assertEqual(self.store.get_constant(self.key), 5.5)

    def test_exceeding_the_slack(self):
        """A later constant above slack x stored is flagged and not stored."""
        verdict, stored = self.store.compare(FittedConstant('gradient_bound', self.key, 6.5, 100))
        self.assertEqual(verdict, ConstantVerdict.EXCEEDED)
        self.assertEqual(stored, 4.0)
        self.store.record(FittedConstant('gradient_bound', self.key, 6.5, 100))
        self.assertEqual(self.store.get_constant(self.key), 4.0)

    def test_save_and_reload(self):
        self.store.record(FittedConstant('harnack', 'harnack|d=2|alpha=1.5|ball', 3.0, 6))
        self.store.save_constants_to_json(self.test_json_path)
        other = ConstantStore()
        other.load_constants_from_json(self.test_json_path)
        self.assertEqual(other.constants, self.store.constants)

    def test_missing_file_gives_empty_store(self):
        store = ConstantStore()
        store.load_constants_from_json(os.path.join(tempfile.gettempdir(), 'no_such_store.json'))
        self.assertEqual(store.constants, {})

    def test_slack_below_one(self):
        with self.assertRaises(ValueError):
            ConstantStore(slack=0.5)


class TestRefinementStability(unittest.TestCase):
    def test_within_and_beyond_slack(self):
        self.assertTrue(refinement_stable(2.0, 2.9))
        self.assertTrue(refinement_stable(2.9, 2.0))
        self.assertFalse(refinement_stable(2.0, 3.0))
        self.assertFalse(refinement_stable(1.0, 2.0, slack=1.5))

    def test_zero_constants(self):
        self.assertTrue(refinement_stable(0.0, 0.0))
        self.assertFalse(refinement_stable(0.0, 1.0))
