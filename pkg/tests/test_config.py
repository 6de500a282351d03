import json

import pytest

from models.config import ENV_OUTPUT_DIR, ENV_THREADS, RunConfig, config_from_dict, load_config, parse_assignment
from models.errors import ValidationError
from models.kernel import Example31Spec, MovingAverageKernel


def test_defaults():
    config = load_config(environ={})
    assert config == RunConfig()
    assert config.process.build() == MovingAverageKernel.fbm(0.5)
    assert len(config.grid.build()) == 17


def test_parse_assignment_reads_json_values():
    assert parse_assignment('process.hurst=0.75') == ('process.hurst', 0.75)
    assert parse_assignment('tube.eps=[0.1, 0.2]') == ('tube.eps', [0.1, 0.2])
    assert parse_assignment('process.family=indicator') == ('process.family', 'indicator')
    with pytest.raises(ValidationError):
        parse_assignment('process.hurst')


def test_precedence_file_environment_flags(tmp_path):
    path = tmp_path / 'run.json'
    path.write_text(json.dumps({'output_dir': 'from-file', 'threads': 2, 'seed': 3,
                                'grid': {'n_steps': 8}}))
    environ = {ENV_OUTPUT_DIR: 'from-env', ENV_THREADS: '6'}

    config = load_config(path, environ=environ)
    assert (config.output_dir, config.threads, config.seed) == ('from-env', 6, 3)

    config = load_config(path, overrides=['grid.n_steps=32'], seed=9, threads=1, environ=environ)
    assert (config.output_dir, config.threads, config.seed) == ('from-env', 1, 9)
    assert config.grid.n_steps == 32


def test_integer_values_are_accepted_for_float_fields():
    config = config_from_dict({'process': {'hurst': 0.75}, 'grid': {'T': 2}})
    assert isinstance(config.grid.T, float)
    assert config.grid.build().T == 2.0


def test_lists_become_tuples():
    config = config_from_dict({'grid': {'times': [0.5, 1.0, 2.0]}, 'tube': {'eps': [0.25]}})
    assert config.grid.times == (0.5, 1.0, 2.0)
    assert config.tube.eps == (0.25,)


def test_example_process_configuration():
    config = config_from_dict({'process': {'family': 'example31', 'n_max': 6, 'corrected_sign': False}})
    spec = config.process.build()
    assert isinstance(spec, Example31Spec)
    assert spec.sign == -1.0


@pytest.mark.parametrize('document, field', [
    ({'process': {'hurst': 1.5}}, 'process.hurst'),
    ({'process': {'family': 'levy'}}, 'process.family'),
    ({'process': {'hurts': 0.5}}, 'process.hurts'),
    ({'grid': {'times': [1.0, 0.5]}}, 'grid.times'),
    ({'numerics': {'mode': 'past'}}, 'numerics.mode'),
    ({'simulate': {'methods': ['euler']}}, 'simulate.methods'),
    ({'tube': {'eps': [0.0]}}, 'tube.eps'),
    ({'deconv': {'gap': 2.0}}, 'deconv.gap'),
    ({'counterexample': {'verdict_steps': [0]}}, 'counterexample.verdict_steps'),
    ({'threads': 0}, 'threads'),
    ({'grid': 4}, 'grid'),
])
def test_invalid_documents_name_the_offending_field(document, field):
    with pytest.raises(ValidationError) as info:
        config_from_dict(document)
    assert info.value.field == field


def test_missing_or_malformed_file(tmp_path):
    with pytest.raises(ValidationError):
        load_config(tmp_path / 'absent.json', environ={})
    broken = tmp_path / 'broken.json'
    broken.write_text('{not json')
    with pytest.raises(ValidationError):
        load_config(broken, environ={})


def test_bad_thread_variable_is_rejected():
    with pytest.raises(ValidationError):
        load_config(environ={ENV_THREADS: 'many'})
