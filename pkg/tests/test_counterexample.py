from fractions import Fraction

import numpy as np
import pytest
from numpy.testing import assert_allclose

from algorithms import cfs, counterexample, covariance
from models.grid import Grid
from models.kernel import Example31Spec
from utils.sample_data import example31_default


def test_brackets_vanish_for_the_corrected_sign():
    summary = counterexample.run_counterexample(Example31Spec(n_max=6), verdict_steps=(), trapezoid_steps=(64,),
                                                compare_published=False)
    assert [value for _, value in summary.brackets] == ['0'] * 7
    assert Fraction(summary.brackets[0][1]) == 0


def test_short_ladder():
    spec = example31_default()
    summary = counterexample.run_counterexample(spec, verdict_steps=(64, 256), trapezoid_steps=(64, 128, 256, 512))
    assert [row.steps for row in summary.rows] == [64, 128, 256, 512]

    verdicts = {row.steps: row.grid_verdict for row in summary.rows}
    assert verdicts == {64: True, 128: None, 256: True, 512: None}
    assert all(row.min_cond_variance > 0 for row in summary.rows if row.grid_verdict is not None)

    assert counterexample.trapezoid_is_decreasing(summary.rows)
    assert summary.rows[-1].ratio < 1e-3

    # the published sign keeps the time integral away from zero
    assert len(summary.published_rows) == 4
    assert all(row.ratio > 0.1 for row in summary.published_rows)


def test_exact_time_integral_variance_of_the_published_sign():
    # int_0^1 X dt = sum_n 2 b_n int (1 - v) dB over block n
    spec = Example31Spec(n_max=10, corrected_sign=False)
    expected = 4.0 * sum(spec.b(n) ** 2 * 8.0 ** -n * 7.0 / 24.0 for n in range(spec.n_max))
    grid = Grid.uniform(1.0, 1024)
    gram = covariance.example31_gram(spec, grid)
    weights = cfs.trapezoid_weights(grid)
    assert_allclose(weights @ gram.sigma @ weights, expected, rtol=1e-3)


def test_variance_of_x1_is_kept_in_every_row():
    spec = Example31Spec(n_max=8)
    summary = counterexample.run_counterexample(spec, verdict_steps=(64,), trapezoid_steps=(64, 128),
                                                compare_published=False)
    expected = sum(spec.b(n) ** 2 * 2.0 ** -n * 13.0 / 6.0 for n in range(spec.n_max))
    for row in summary.rows:
        assert_allclose(row.var_x1, expected, rtol=1e-10)
    assert summary.published_rows == []


@pytest.mark.slow
def test_full_ladder_to_4096_steps():
    summary = counterexample.run_counterexample(example31_default())
    assert [row.steps for row in summary.rows] == list(counterexample.TRAPEZOID_STEPS)
    assert all(row.grid_verdict for row in summary.rows if row.steps in counterexample.VERDICT_STEPS)
    assert counterexample.trapezoid_is_decreasing(summary.rows)
    assert summary.rows[-1].ratio < 1e-3
    assert np.all([row.ratio > 0.1 for row in summary.published_rows])
