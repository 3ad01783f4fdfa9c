"""Tests for the command-line entry point."""

import copy
import glob
import json
import os

import pytest

from main import EXIT_CONFIG_ERROR, EXIT_ERROR, EXIT_FAILED_CHECKS, EXIT_OK, OUTPUT_ENV, main


@pytest.fixture
def write_config(tmp_path):
    """Write a configuration mapping to a JSON file and return its path."""
    def create_config(data, name='config.json'):
        path = tmp_path / name
        path.write_text(json.dumps(data))
        return str(path)
    return create_config


def test_run_and_report(minimal_config_data, write_config, tmp_path, capsys):
    out = str(tmp_path / 'runs')
    assert main(['run', write_config(minimal_config_data), '--out', out]) == EXIT_OK
    manifests = glob.glob(os.path.join(out, '*_manifest.json'))
    assert len(manifests) == 1
    capsys.readouterr()

    assert main(['report', out]) == EXIT_OK
    first = capsys.readouterr().out
    assert main(['report', manifests[0]]) == EXIT_OK
    second = capsys.readouterr().out
    assert first == second
    assert 'overall PASS' in first
    assert 'chapman_kolmogorov' in first


def test_failing_check_exit_code(minimal_config_data, write_config, tmp_path):
    data = copy.deepcopy(minimal_config_data)
    data['checks'] = [{'id': 'free_scaling', 'tolerance': -1.0}]
    out = str(tmp_path / 'runs')
    assert main(['run', write_config(data), '--out', out]) == EXIT_FAILED_CHECKS
    assert main(['report', out]) == EXIT_FAILED_CHECKS


def test_output_directory_from_environment(minimal_config_data, write_config, tmp_path,
                                           monkeypatch):
    out = str(tmp_path / 'from_env')
    monkeypatch.setenv(OUTPUT_ENV, out)
    assert main(['run', write_config(minimal_config_data)]) == EXIT_OK
    assert glob.glob(os.path.join(out, '*_manifest.json'))


@pytest.mark.parametrize('changes', [
    {'params': {'d': 2, 'alpha': 2.5}},
    {'checks': ['no_such_check']},
    {'unknown_block': {}},
])
def test_configuration_errors(minimal_config_data, write_config, tmp_path, changes):
    data = copy.deepcopy(minimal_config_data)
    data.update(changes)
    assert main(['run', write_config(data), '--out', str(tmp_path)]) == EXIT_CONFIG_ERROR


def test_usage_errors(minimal_config_data, write_config, tmp_path):
    assert main([]) == EXIT_CONFIG_ERROR
    assert main(['run', write_config(minimal_config_data), '--workers', '0']) == EXIT_CONFIG_ERROR
    assert main(['run', str(tmp_path / 'absent.json')]) == EXIT_CONFIG_ERROR


def test_report_of_missing_run(tmp_path):
    assert main(['report', str(tmp_path / 'nothing_here')]) == EXIT_ERROR
