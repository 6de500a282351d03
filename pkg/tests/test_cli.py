import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

import main
from models.config import load_config
from utils import artifacts
from utils.monitoring import RunMonitor
from utils.sample_data import gapped_kernel


def _run(tmp_path, subcommand, *assignments, threads=None):
    argv = [subcommand, '--out-dir', str(tmp_path)]
    for assignment in assignments:
        argv += ['--set', assignment]
    if threads is not None:
        argv += ['--threads', str(threads)]
    return main.main(argv)


def test_check_cfs_on_brownian_motion(tmp_path):
    assert _run(tmp_path, 'check-cfs', 'grid.n_steps=16') == main.EXIT_OK
    document = artifacts.read_json(tmp_path / 'cfs_report.json')
    report = document['report']
    assert report['grid_verdict'] is True
    assert_allclose(report['min_cond_variance'], 1.0 / 16, rtol=1e-10)
    assert 'continuity_caveat' in report
    assert document['gram']['mode'] == 'full'


def test_invalid_hurst_exits_with_validation_status(tmp_path):
    assert _run(tmp_path, 'gram', 'process.hurst=1.5') == main.EXIT_VALIDATION
    diagnostic = artifacts.read_json(tmp_path / 'diagnostics.json')
    assert diagnostic['error'] == 'ValidationError'
    assert diagnostic['field'] == 'process.hurst'
    assert not (tmp_path / 'gram.csv').exists()


@pytest.mark.parametrize('subcommand, assignments, field', [
    ('tube', ['tube.targets=["{missing}"]'], 'tube.targets'),
    ('check-cfs', ['cfs.extra_weights=["{missing}"]'], 'cfs.extra_weights'),
    ('gram', ['process.family="tabulated"', 'process.table="{missing}"'], 'process.table'),
])
def test_missing_input_file_exits_with_validation_status(tmp_path, subcommand, assignments, field):
    missing = tmp_path / 'inputs' / 'absent.csv'
    filled = [assignment.replace('{missing}', str(missing)) for assignment in assignments]
    assert _run(tmp_path, subcommand, 'grid.n_steps=4', *filled) == main.EXIT_VALIDATION
    diagnostic = artifacts.read_json(tmp_path / 'diagnostics.json')
    assert diagnostic['error'] == 'ValidationError'
    assert diagnostic['field'] == field
    assert 'absent.csv' in diagnostic['message']


def test_simulate_skips_the_direct_comparison_against_a_fresh_gram(tmp_path):
    status = _run(tmp_path, 'simulate', 'numerics.mode="fresh"', 'process.hurst=0.75', 'grid.n_steps=4',
                  'simulate.n_paths=2000')
    assert status == main.EXIT_OK
    methods = artifacts.read_json(tmp_path / 'simulate.json')['methods']
    assert methods['direct']['compared'] is False
    assert 'max_abs_deviation' not in methods['direct']
    assert 'max_abs_deviation' in methods['cholesky']
    assert (tmp_path / 'paths_direct.csv').exists()


def test_unknown_configuration_key_is_rejected(tmp_path):
    config = tmp_path / 'run.json'
    config.write_text(json.dumps({'process': {'hurts': 0.5}}))
    status = main.main(['gram', '--config', str(config), '--out-dir', str(tmp_path)])
    assert status == main.EXIT_VALIDATION
    assert artifacts.read_json(tmp_path / 'diagnostics.json')['field'] == 'process.hurts'


def test_truncation_failure_exits_with_numerical_status(tmp_path):
    status = _run(tmp_path, 'gram', 'process.hurst=0.75', 'numerics.L=2')
    assert status == main.EXIT_NUMERICAL
    diagnostic = artifacts.read_json(tmp_path / 'diagnostics.json')
    assert diagnostic['error'] == 'QuadratureError'
    assert diagnostic['field'] == 'numerics.L'


def test_gram_artifacts_can_be_reloaded(tmp_path):
    assert _run(tmp_path, 'gram', 'process.family="indicator"', 'grid.n_steps=4') == main.EXIT_OK
    gram = artifacts.load_gram(tmp_path / 'gram.csv')
    times = gram.grid.times
    assert_allclose(gram.sigma, 2.0 * np.minimum.outer(times, times), atol=1e-10)
    assert gram.mode == 'full'


def test_tabulated_kernel_from_csv(tmp_path):
    kernel = gapped_kernel()
    table = tmp_path / 'kernel.csv'
    artifacts.write_matrix_csv(table, np.column_stack([kernel.xs, kernel.vals]), header='x,f')
    status = _run(tmp_path, 'check-cfs', 'process.family="tabulated"', f'process.table="{table}"',
                  'grid.n_steps=8')
    assert status == main.EXIT_OK
    document = artifacts.read_json(tmp_path / 'cfs_report.json')
    assert len(document['report']['cond_variances']) == 8
    assert document['gram']['label'] == 'tabulated(34 knots)'


THREADED_RUNS = [
    ('gram', ['grid.n_steps=8'], {'gram.csv', 'gram.json'}),
    ('simulate', ['grid.n_steps=4', 'simulate.n_paths=9000', 'seed=5'],
     {'paths_cholesky.csv', 'paths_cholesky.json', 'paths_direct.csv', 'paths_direct.json', 'simulate.json'}),
    ('check-cfs', ['grid.n_steps=4', 'cfs.with_tubes=true', 'tube.n_paths=9000'], {'cfs_report.json'}),
    ('tube', ['grid.n_steps=4', 'tube.n_paths=9000'], {'tube.json'}),
    ('deconvolve', ['deconv.refinement_ks=[4, 5]'], {'deconv.json', 'deconv_g.csv'}),
    ('counterexample', ['process.family="example31"', 'counterexample.verdict_steps=[64]',
                        'counterexample.trapezoid_steps=[64, 128]'], {'counterexample.json', 'counterexample.csv'}),
]


@pytest.mark.parametrize('subcommand, assignments, expected', THREADED_RUNS, ids=[run[0] for run in THREADED_RUNS])
def test_artifacts_do_not_depend_on_threads(tmp_path, subcommand, assignments, expected):
    outputs = []
    for threads in (1, 4, 8):
        out = tmp_path / f'threads{threads}'
        assert _run(out, subcommand, *assignments, threads=threads) == main.EXIT_OK
        outputs.append({path.name: path.read_bytes() for path in sorted(out.iterdir())})
    assert set(outputs[0]) == expected
    assert outputs[0] == outputs[1] == outputs[2]


def test_simulation_summary_is_within_tolerance(tmp_path):
    assert _run(tmp_path, 'simulate', 'grid.n_steps=4', 'simulate.n_paths=20000') == main.EXIT_OK
    summary = artifacts.read_json(tmp_path / 'simulate.json')
    for method in ('cholesky', 'direct'):
        entry = summary['methods'][method]
        assert entry['max_abs_deviation'] <= 5.0 * entry['max_standard_error'] + 1e-2
    ensemble = artifacts.load_ensemble(tmp_path / 'paths_direct.csv')
    assert ensemble.n_paths == 20000
    assert ensemble.method == 'direct'


def test_tube_report_includes_the_brownian_series(tmp_path):
    assert _run(tmp_path, 'tube', 'tube.n_paths=20000') == main.EXIT_OK
    document = artifacts.read_json(tmp_path / 'tube.json')
    estimates = [entry['estimate'] for entry in document['estimates']]
    assert estimates == sorted(estimates)
    series = document['brownian_series']
    assert [entry['eps'] for entry in series] == [0.5, 1.0]
    assert all(entry['monitored'] > entry['continuous'] for entry in series)


def test_deconvolve_named_problem(tmp_path):
    assert _run(tmp_path, 'deconvolve') == main.EXIT_OK
    document = artifacts.read_json(tmp_path / 'deconv.json')
    assert document['sup_error'] < 1e-8
    assert document['edge_h'] == 0.0
    assert len(document['refinement']) == 6
    g = artifacts.read_vector_csv(tmp_path / 'deconv_g.csv')
    assert_allclose(g[1:], 1.0, atol=1e-6)


def test_deconvolve_with_a_gap(tmp_path):
    assert _run(tmp_path, 'deconvolve', 'deconv.h="gap"', 'deconv.refinement_ks=[]') == main.EXIT_OK
    document = artifacts.read_json(tmp_path / 'deconv.json')
    assert document['sup_error'] >= 0.24
    assert document['ladder'][-1] == {'lam': 0.0, 'sup_error': None}
    assert 'refinement' not in document


def test_counterexample_subcommand(tmp_path):
    status = _run(tmp_path, 'counterexample', 'process.family="example31"',
                  'counterexample.verdict_steps=[64]', 'counterexample.trapezoid_steps=[64,128]')
    assert status == main.EXIT_OK
    summary = artifacts.read_json(tmp_path / 'counterexample.json')
    assert summary['rows'][0]['grid_verdict'] is True
    assert summary['rows'][1]['grid_verdict'] is None
    assert all(value == '0' for _, value in summary['brackets'])
    table = artifacts.read_matrix_csv(tmp_path / 'counterexample.csv')
    assert table.shape == (2, 4)


def test_counterexample_needs_the_example_process(tmp_path):
    assert _run(tmp_path, 'counterexample') == main.EXIT_VALIDATION


def test_unknown_subcommand_is_refused_by_the_parser():
    with pytest.raises(SystemExit):
        main.main(['integrate'])


def test_run_records_stages_and_counters(tmp_path):
    monitor = RunMonitor()
    config = load_config(overrides=['grid.n_steps=4'], output_dir=str(tmp_path), environ={})
    assert main.run('gram', config, monitor) == main.EXIT_OK
    summary = monitor.get_performance_summary()
    assert summary['stages']['gram']['calls'] == 1
    assert summary['counters']['grams_built'] == 1
    assert summary['counters']['largest_gram'] == 5
