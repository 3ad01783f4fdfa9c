"""Unit tests for the ExperimentConfig class."""

import copy
import json
import os
import tempfile
import unittest

import pytest

from src.data.experiment_config import ExperimentConfig
from src.errors import ConfigError

BASE = {
    'params': {'d': 2, 'alpha': 1.5},
    'domain': {'kind': 'ball', 'center': [0.0, 0.0], 'radius': 1.0},
    'drift': {'name': 'constant', 'vector': [0.3, 0.0]},
    'checks': ['two_sided', {'id': 'chapman_kolmogorov', 'tolerance': 0.02}],
}


def _with(**changes):
    data = copy.deepcopy(BASE)
    data.update(changes)
    return data


class TestExperimentConfig(unittest.TestCase):
    def test_defaults(self):
        config = ExperimentConfig.from_dict(BASE)
        self.assertEqual(config.base_kernel, 'envelope')
        self.assertEqual(config.targets, [[0.0, 0.0]])
        self.assertEqual(config.check('chapman_kolmogorov').tolerance, 0.02)
        self.assertIsNone(config.check('two_sided').tolerance)
        self.assertIsNone(config.check('harnack'))
        self.assertEqual(config.seeds(), {'montecarlo': 0, 'sweep': 0})

    def test_whole_space_defaults_to_free_base(self):
        config = ExperimentConfig.from_dict(_with(domain=None))
        self.assertEqual(config.base_kernel, 'free')
        self.assertTrue(config.domain.is_whole_space)

    def test_half_space_default_target(self):
        config = ExperimentConfig.from_dict(_with(domain={'kind': 'half_space',
                                                          'normal': [0.0, 1.0], 'offset': 0.0}))
        self.assertEqual(config.targets, [[0.0, 1.0]])

    def test_hash_is_deterministic_and_key_order_free(self):
        reordered = dict(reversed(list(copy.deepcopy(BASE).items())))
        a = ExperimentConfig.from_dict(BASE)
        b = ExperimentConfig.from_dict(reordered)
        c = ExperimentConfig.from_dict(_with(sweep={'n': 10, 'seed': 1}))
        self.assertEqual(a.config_hash, b.config_hash)
        self.assertNotEqual(a.config_hash, c.config_hash)
        self.assertEqual(len(a.hash_prefix), 12)

    def test_from_json(self):
        handle, path = tempfile.mkstemp(suffix='.json')
        os.close(handle)
        try:
            with open(path, 'w') as f:
                json.dump(BASE, f)
            self.assertEqual(ExperimentConfig.from_json(path).config_hash,
                             ExperimentConfig.from_dict(BASE).config_hash)
            with open(path, 'w') as f:
                f.write('{"params": ')
            with self.assertRaises(ConfigError):
                ExperimentConfig.from_json(path)
        finally:
            os.remove(path)

    def test_missing_file(self):
        with self.assertRaises(ConfigError) as ctx:
            ExperimentConfig.from_json(os.path.join(tempfile.gettempdir(), 'absent_config.json'))
        self.assertEqual(ctx.exception.field, '<file>')


@pytest.mark.parametrize('changes, field', [
    ({'params': {'d': 2, 'alpha': 2.0}}, 'params.alpha'),
    ({'params': {'d': 2, 'alpha': 0.9}}, 'params.alpha'),
    ({'params': {'d': 1, 'alpha': 1.5}}, 'params.d'),
    ({'params': {'d': 2, 'alpha': 1.5, 'beta': 1}}, 'params.beta'),
    ({'colour': 'red'}, '<root>.colour'),
    ({'targets': [[0.0, 0.0, 0.0]]}, 'targets[0]'),
    ({'targets': [[0.0, 0.0], [2.0, 0.0]]}, 'targets[1]'),
    ({'checks': []}, 'checks'),
    ({'checks': ['two_sided', 'two_sided']}, 'checks'),
    ({'checks': [{'name': 'two_sided'}]}, 'checks[0].id'),
    ({'grid': {'spacing': -0.1}}, 'grid.spacing'),
    ({'grid': {'n_times': 1}}, 'grid.n_times'),
    ({'grid': {'refinement': 'both'}}, 'grid.refinement'),
    ({'montecarlo': {'dt': 0}}, 'montecarlo.dt'),
    ({'montecarlo': {'seed': -3}}, 'montecarlo.seed'),
    ({'series': {'base': 'free'}}, 'series.base'),
    ({'series': {'base': 'exact'}}, 'series.base'),
    ({'drift': {'vector': [1.0, 0.0]}}, 'drift.name'),
    ({'domain': {'kind': 'ball', 'center': [0.0, 0.0], 'radius': 1.0, 'theta': 0.5}},
     'domain.theta'),
    ({'sweep': {'count': 5}}, 'sweep.count'),
])
def test_validation_names_the_field(changes, field):
    """Every invalid entry raises a ConfigError naming its path."""
    with pytest.raises(ConfigError) as excinfo:
        ExperimentConfig.from_dict(_with(**changes))
    assert excinfo.value.field == field
