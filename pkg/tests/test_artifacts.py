import json
from fractions import Fraction

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from algorithms import covariance, gaussian
from models.errors import NotPositiveSemidefiniteError, ValidationError
from models.gaussian_vector import GaussianVector
from models.grid import Grid
from models.reports import CounterexampleRow
from utils import artifacts


def test_to_jsonable_rounds_and_converts():
    payload = {
        'value': 1.0 / 3.0,
        'array': np.array([0.1 + 0.2, 2.0]),
        'flag': np.bool_(True),
        'count': np.int64(4),
        'exact': Fraction(1, 3),
        'row': CounterexampleRow(steps=64, grid_verdict=None, min_cond_variance=None,
                                 trapezoid_variance=1.0, var_x1=4.0),
    }
    out = artifacts.to_jsonable(payload)
    assert out['value'] == 0.333333333333
    assert out['array'] == [0.3, 2.0]
    assert out['flag'] is True and out['count'] == 4
    assert out['exact'] == '1/3'
    assert out['row']['ratio'] == 0.25
    json.dumps(out)


def test_json_documents_are_versioned(tmp_path):
    path = artifacts.write_json(tmp_path / 'out' / 'doc.json', {'b': 1, 'a': 2})
    text = path.read_text()
    assert text.index('"a"') < text.index('"b"')
    assert artifacts.read_json(path)['format_version'] == artifacts.FORMAT_VERSION

    path.write_text(json.dumps({'format_version': '0.1'}))
    with pytest.raises(ValidationError):
        artifacts.read_json(path)


def test_vector_csv_with_and_without_header(tmp_path):
    plain = tmp_path / 'plain.csv'
    plain.write_text('0.5\n1.5\n')
    headed = artifacts.write_matrix_csv(tmp_path / 'headed.csv', np.array([[0.5], [1.5]]), header='psi')
    assert_array_equal(artifacts.read_vector_csv(plain), [0.5, 1.5])
    assert_array_equal(artifacts.read_vector_csv(headed), [0.5, 1.5])

    table = artifacts.write_matrix_csv(tmp_path / 'table.csv', np.ones((2, 2)))
    with pytest.raises(ValidationError):
        artifacts.read_vector_csv(table)


def test_tabulated_kernel_needs_two_columns(tmp_path):
    path = artifacts.write_matrix_csv(tmp_path / 'k.csv', np.array([[-1.0, 1.0, 0.0], [0.0, 0.0, 0.0]]))
    with pytest.raises(ValidationError) as info:
        artifacts.load_tabulated_csv(path)
    assert info.value.field == 'process.table'

    path = artifacts.write_matrix_csv(tmp_path / 'k2.csv', np.array([[-1.0, 1.0], [0.0, 0.0]]), header='x,f')
    kernel = artifacts.load_tabulated_csv(path, scale=2.0)
    assert kernel.xs == (-1.0, 0.0) and kernel.scale == 2.0


def test_saved_gram_is_checked_again_on_import(tmp_path):
    grid = Grid.explicit([1.0, 2.0])
    gram = covariance.fbm_gram_closed(grid, 0.75)
    csv_path, json_path = artifacts.save_gram(gram, tmp_path)
    loaded = artifacts.load_gram(csv_path, json_path)
    assert_allclose(loaded.sigma, gram.sigma, rtol=1e-11)
    assert loaded.mode == 'closed'

    artifacts.write_matrix_csv(csv_path, np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(NotPositiveSemidefiniteError):
        artifacts.load_gram(csv_path, json_path)


def test_saved_ensemble_keeps_its_metadata(tmp_path):
    gram = covariance.fbm_gram_closed(Grid.uniform(1.0, 4), 0.5)
    ensemble = gaussian.sample(GaussianVector.centered(gram), 50, seed=12)
    artifacts.save_ensemble(ensemble, tmp_path, 'paths')
    loaded = artifacts.load_ensemble(tmp_path / 'paths.csv')
    assert loaded.seed == 12 and loaded.method == 'cholesky'
    assert_allclose(loaded.paths, ensemble.paths, rtol=1e-11, atol=1e-15)


def test_missing_input_file_names_the_setting(tmp_path):
    absent = tmp_path / 'absent.csv'
    with pytest.raises(ValidationError) as info:
        artifacts.read_vector_csv(absent, field='tube.targets')
    assert info.value.field == 'tube.targets'
    with pytest.raises(ValidationError) as info:
        artifacts.load_tabulated_csv(absent)
    assert info.value.field == 'process.table'
    with pytest.raises(ValidationError) as info:
        artifacts.read_matrix_csv(absent)
    assert info.value.field == str(absent)
