import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy import stats

from algorithms import covariance, gaussian
from models.errors import InconsistentConditioningError, NotPositiveSemidefiniteError, ValidationError
from models.gaussian_vector import GaussianVector
from models.grid import Grid
from models.kernel import MovingAverageKernel


def _vector(sigma, mean=None):
    sigma = np.asarray(sigma, dtype=float)
    grid = Grid.explicit(np.arange(1, sigma.shape[0] + 1, dtype=float))
    gram = covariance.gram_from_matrix(sigma, grid)
    if mean is None:
        return GaussianVector.centered(gram)
    return GaussianVector(mean, gram)


def _brownian_gram(times):
    grid = Grid.explicit(times)
    return covariance.gram_from_matrix(np.minimum.outer(grid.times, grid.times), grid)


def test_factor_of_identity_is_identity():
    psd = gaussian.factor_psd(np.eye(3))
    assert psd.rank == 3
    assert_allclose(psd.factor, np.eye(3))


def test_factor_of_rank_one_matrix():
    psd = gaussian.factor_psd(np.ones((2, 2)))
    assert psd.rank == 1
    assert_allclose(psd.factor @ psd.factor.T, np.ones((2, 2)))


def test_factor_reproduces_brownian_gram():
    gram = _brownian_gram([0.25, 0.5, 1.0])
    psd = gaussian.factor_psd(gram)
    assert psd.rank == 3
    assert_allclose(psd.factor @ psd.factor.T, gram.sigma, atol=1e-14)


def test_rank_matches_eigenvalue_count_on_low_rank_matrix():
    generator = np.random.default_rng(7)
    g = generator.standard_normal((64, 10))
    sigma = g @ g.T
    psd = gaussian.factor_psd(sigma)
    eigvals = np.linalg.eigvalsh(sigma)
    assert psd.rank == int(np.sum(eigvals > gaussian.TAU_RANK * eigvals[-1])) == 10
    assert_allclose(psd.factor @ psd.factor.T, sigma, atol=1e-8 * np.max(sigma))


def test_negative_pivot_is_rejected():
    with pytest.raises(NotPositiveSemidefiniteError):
        gaussian.factor_psd(np.diag([1.0, -1.0]))


def test_bivariate_conditioning():
    rho = 0.6
    result = gaussian.condition(_vector([[1.0, rho], [rho, 1.0]]), [0], [2.0])
    assert_allclose(result.mean, [1.2])
    assert_allclose(result.cov, [[0.64]])
    assert result.gram.mode == 'conditional'
    assert_allclose(result.gram.grid.times, [2.0])


def test_uncorrelated_coordinate_is_unchanged():
    result = gaussian.condition(_vector(np.eye(2)), [0], [5.0])
    assert_allclose(result.mean, [0.0])
    assert_allclose(result.cov, [[1.0]])


def test_degenerate_pair_pins_the_free_coordinate():
    result = gaussian.condition(_vector(np.ones((2, 2))), [0], [0.3])
    assert_allclose(result.mean, [0.3])
    assert_allclose(result.cov, [[0.0]], atol=1e-14)


def test_values_off_a_degenerate_observed_block_are_inconsistent():
    sigma = [[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    with pytest.raises(InconsistentConditioningError):
        gaussian.condition(_vector(sigma), [0, 1], [0.3, 0.5])


def test_sequential_conditioning_matches_joint_conditioning():
    generator = np.random.default_rng(11)
    g = generator.standard_normal((4, 4))
    gv = _vector(g @ g.T + 0.1 * np.eye(4), mean=[0.5, -1.0, 2.0, 0.0])
    joint = gaussian.condition(gv, [0, 1], [0.2, 0.7])
    sequential = gaussian.condition(gaussian.condition(gv, [0], [0.2]), [0], [0.7])
    assert_allclose(sequential.mean, joint.mean, atol=1e-8)
    assert_allclose(sequential.cov, joint.cov, atol=1e-8)


@pytest.mark.parametrize('observed, values', [
    ([0, 0], [1.0, 1.0]),
    ([5], [1.0]),
    ([0], [1.0, 2.0]),
    ([0, 1], [1.0, 2.0]),
    ([0], [np.inf]),
])
def test_invalid_conditioning_requests(observed, values):
    with pytest.raises(ValidationError):
        gaussian.condition(_vector(np.eye(2)), observed, values)


def test_conditional_variances_of_brownian_increments_are_the_steps():
    gram = _brownian_gram([0.25, 0.5, 0.75, 1.0])
    residual, kept = gaussian.conditional_variances_in_order(gram)
    assert_allclose(residual, [0.25, 0.25, 0.25, 0.25], atol=1e-14)
    assert kept.all()


def test_zero_covariance_samples_are_the_mean():
    gv = _vector(np.zeros((2, 2)), mean=[1.0, 2.0])
    ensemble = gaussian.sample(gv, 10, seed=1)
    assert_array_equal(ensemble.paths, np.tile([1.0, 2.0], (10, 1)))


def test_sampling_is_reproducible_and_thread_independent():
    gv = GaussianVector.centered(_brownian_gram([0.25, 0.5, 1.0]))
    one = gaussian.sample(gv, 10000, seed=42, n_threads=1)
    again = gaussian.sample(gv, 10000, seed=42, n_threads=1)
    four = gaussian.sample(gv, 10000, seed=42, n_threads=4)
    assert_array_equal(one.paths, again.paths)
    assert_array_equal(one.paths, four.paths)
    other = gaussian.sample(gv, 10000, seed=43)
    assert not np.array_equal(one.paths, other.paths)


def test_sample_prefix_does_not_depend_on_path_count():
    gv = GaussianVector.centered(_brownian_gram([0.5, 1.0]))
    short = gaussian.sample(gv, 100, seed=5)
    long = gaussian.sample(gv, 5000, seed=5)
    assert_array_equal(short.paths, long.paths[:100])


def test_brownian_samples_have_the_right_law():
    n_paths = 100000
    gv = GaussianVector.centered(_brownian_gram([0.25, 0.5, 1.0]))
    ensemble = gaussian.sample(gv, n_paths, seed=2024)
    final = ensemble.paths[:, -1]
    assert abs(np.var(final, ddof=1) - 1.0) <= 4.0 * np.sqrt(2.0 / n_paths)
    assert abs(stats.skew(final)) <= 4.0 * np.sqrt(6.0 / n_paths)


def test_empirical_covariance_is_within_standard_errors():
    n_paths = 50000
    gram = covariance.fbm_gram_closed(Grid.uniform(1.0, 4), 0.75)
    ensemble = gaussian.sample(GaussianVector.centered(gram), n_paths, seed=9)
    empirical = gaussian.empirical_covariance(ensemble)
    errors = gaussian.covariance_standard_errors(gram.sigma, n_paths)
    assert empirical.shape == gram.sigma.shape
    assert np.all(np.abs(empirical - gram.sigma) <= 4.0 * errors + 1e-12)


def test_sample_rejects_bad_arguments():
    gv = GaussianVector.centered(_brownian_gram([1.0]))
    with pytest.raises(ValidationError):
        gaussian.sample(gv, 0, seed=1)
    with pytest.raises(ValidationError):
        gaussian.sample(gv, 10, seed=-1)


def test_sampling_a_quadrature_gram():
    gram = covariance.gram(MovingAverageKernel.indicator(1.0), Grid.uniform(1.0, 4))
    ensemble = gaussian.sample(GaussianVector.centered(gram), 20000, seed=3, n_threads=2)
    assert ensemble.method == 'cholesky'
    assert_array_equal(ensemble.paths[:, 0], 0.0)
