"""
The dyadic-block counterexample end to end: positive conditional increment variances on every grid,
yet a time integral whose variance vanishes under refinement.
"""

import logging
from dataclasses import replace
from typing import Iterable, List

import numpy as np

from algorithms import cfs, covariance, kernels
from models.grid import Grid
from models.kernel import Example31Spec
from models.reports import CounterexampleRow, CounterexampleSummary

logger = logging.getLogger(__name__)

VERDICT_STEPS = (64, 256)
TRAPEZOID_STEPS = (64, 128, 256, 512, 1024, 2048, 4096)


def _row(spec: Example31Spec, steps: int, with_verdict: bool, n_threads: int) -> CounterexampleRow:
    grid = Grid.uniform(1.0, steps)
    gram = covariance.example31_gram(spec, grid, n_threads=n_threads)
    weights = cfs.trapezoid_weights(grid)
    trapezoid = float(weights @ gram.sigma @ weights)
    verdict = min_var = None
    if with_verdict:
        report = cfs.check_cfs(gram, k_smallest=0)
        verdict, min_var = report.grid_verdict, report.min_cond_variance
    logger.debug("example31 %d steps: trapezoid variance %.3g", steps, trapezoid)
    return CounterexampleRow(steps=steps, grid_verdict=verdict, min_cond_variance=min_var,
                             trapezoid_variance=trapezoid, var_x1=float(gram.sigma[-1, -1]))


def run_counterexample(spec: Example31Spec, verdict_steps: Iterable[int] = VERDICT_STEPS,
                       trapezoid_steps: Iterable[int] = TRAPEZOID_STEPS, compare_published: bool = True,
                       n_threads: int = 1) -> CounterexampleSummary:
    """
    Refinement ladder over uniform grids of 2^k steps on [0, 1].

    The criterion is evaluated only at `verdict_steps`: once a step is finer than
    the last block [a_{n_max}, 1], that block carries no fresh noise and the
    truncated process is degenerate there.
    """
    verdict_steps = sorted(set(int(s) for s in verdict_steps))
    all_steps = sorted(set(int(s) for s in trapezoid_steps) | set(verdict_steps))
    rows = [_row(spec, steps, steps in verdict_steps, n_threads) for steps in all_steps]

    published: List[CounterexampleRow] = []
    if compare_published and spec.corrected_sign:
        other = replace(spec, corrected_sign=False)
        published = [_row(other, steps, False, n_threads) for steps in all_steps]

    brackets = [(n, str(kernels.example31_bracket(n, spec.corrected_sign))) for n in range(spec.n_max + 1)]
    label = f"example31(n_max={spec.n_max}, {'corrected' if spec.corrected_sign else 'published'} sign)"
    if any(row.grid_verdict is False for row in rows):
        logger.warning("grid criterion failed on a verdict grid of %s", label)
    return CounterexampleSummary(label=label, rows=rows, brackets=brackets, published_rows=published)


def trapezoid_is_decreasing(rows: List[CounterexampleRow]) -> bool:
    values = np.array([row.trapezoid_variance for row in rows])
    return bool(np.all(np.diff(values) < 0))
