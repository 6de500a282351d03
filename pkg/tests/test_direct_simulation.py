import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from algorithms import covariance, gaussian
from algorithms.direct_simulation import (cell_edges, direct_simulate, discretization_allowance,
                                          riemann_covariance, scheme_matrix)
from models.errors import ValidationError
from models.grid import Grid
from models.kernel import Example31Spec, MovingAverageKernel
from utils.sample_data import oracle_grid


def _within_band(process, reference, n_paths=100000, seed=17):
    grid = reference.grid
    ensemble = direct_simulate(process, grid, n_paths, seed)
    empirical = gaussian.empirical_covariance(ensemble)
    errors = gaussian.covariance_standard_errors(reference.sigma, n_paths)
    allowance = discretization_allowance(process, grid, reference, L=ensemble.L)
    # 15 distinct entries are compared at once
    return np.abs(empirical - reference.sigma) <= 4.0 * errors + allowance + 1e-12


def test_cell_partition_contains_grid_times_and_breakpoints():
    grid = oracle_grid()
    edges = cell_edges(MovingAverageKernel.indicator(1.0), grid, 4, L=3.0)
    for point in list(grid.times) + [-1.0, -0.75, -3.0]:
        assert np.min(np.abs(edges - point)) < 1e-12
    assert np.all(np.diff(edges) > 0)


def test_deep_past_cells_grow_geometrically():
    edges = cell_edges(MovingAverageKernel.fbm(0.75), Grid.uniform(1.0, 4), 16, L=100.0)
    deep = edges[edges <= -8.0]
    assert deep[0] == -100.0 and deep[-1] == -8.0
    widths = np.diff(deep)
    assert np.all(widths[:-1] <= 1.1 * widths[1:] * (1 + 1e-9))
    assert_allclose(np.diff(edges[edges >= -8.0]), 1.0 / 64)


def test_brownian_scheme_covariance_is_exact():
    grid = oracle_grid()
    scheme = riemann_covariance(MovingAverageKernel.fbm(0.5), grid)
    assert_allclose(scheme.sigma, np.minimum.outer(grid.times, grid.times), atol=1e-12)
    assert scheme.mode == 'riemann'


def test_invalid_substeps_and_paths_are_rejected():
    grid = oracle_grid()
    with pytest.raises(ValidationError):
        cell_edges(MovingAverageKernel.fbm(0.5), grid, 0, L=10.0)
    with pytest.raises(ValidationError):
        direct_simulate(MovingAverageKernel.fbm(0.5), grid, 0, seed=1)


@pytest.mark.parametrize('process', [MovingAverageKernel.fbm(0.75), Example31Spec(n_max=12)])
def test_discretization_allowance_shrinks_with_substeps(process):
    grid = oracle_grid()
    if isinstance(process, Example31Spec):
        reference = covariance.example31_gram(process, grid)
    else:
        reference = covariance.gram(process, grid)
    coarse = discretization_allowance(process, grid, reference, substeps=8)
    default = discretization_allowance(process, grid, reference, substeps=16)
    fine = discretization_allowance(process, grid, reference, substeps=32)
    assert fine < coarse
    assert default < 1e-2


def test_example31_scheme_is_linear_in_the_increments():
    spec = Example31Spec(n_max=5)
    grid = oracle_grid()
    coefficients, widths, edges = scheme_matrix(spec, grid, substeps=4)
    assert coefficients.shape == (len(grid), widths.size)
    assert_allclose(np.sum(widths), 1.0)
    # X_0 = 0 and the first block is plain Brownian motion up to a_1
    assert_array_equal(coefficients[0], 0.0)
    assert_allclose(coefficients[2], (edges[1:] <= 0.5 + 1e-12).astype(float))


def test_direct_simulation_is_reproducible_across_threads():
    grid = oracle_grid()
    kernel = MovingAverageKernel.fbm(0.75)
    one = direct_simulate(kernel, grid, 9000, seed=3, n_threads=1)
    three = direct_simulate(kernel, grid, 9000, seed=3, n_threads=3)
    assert_array_equal(one.paths, three.paths)
    assert one.method == 'direct'
    assert one.L == covariance.default_truncation(kernel, grid)


def test_example31_direct_paths_carry_no_truncation_depth():
    ensemble = direct_simulate(Example31Spec(n_max=4), oracle_grid(), 100, seed=1)
    assert ensemble.L is None
    assert_array_equal(ensemble.paths[:, 0], 0.0)


def test_brownian_direct_covariance_matches_min():
    grid = oracle_grid()
    reference = covariance.gram_from_matrix(np.minimum.outer(grid.times, grid.times), grid)
    assert _within_band(MovingAverageKernel.fbm(0.5), reference).all()


def test_indicator_direct_covariance_matches_twice_min():
    grid = oracle_grid()
    reference = covariance.gram_from_matrix(2.0 * np.minimum.outer(grid.times, grid.times), grid)
    assert _within_band(MovingAverageKernel.indicator(1.0), reference).all()


@pytest.mark.slow
def test_fbm_direct_covariance_matches_quadrature_gram():
    kernel = MovingAverageKernel.fbm(0.75)
    reference = covariance.gram(kernel, oracle_grid())
    assert _within_band(kernel, reference).all()


@pytest.mark.slow
@pytest.mark.parametrize('corrected_sign', [True, False])
def test_example31_direct_covariance_matches_gram(corrected_sign):
    spec = Example31Spec(n_max=12, corrected_sign=corrected_sign)
    reference = covariance.example31_gram(spec, oracle_grid())
    assert _within_band(spec, reference).all()
