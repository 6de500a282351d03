"""
Direct simulation of the defining stochastic integrals.

Paths are Riemann sums of the integrand against i.i.d. Brownian increments on a
refined cell partition, so they never touch the Gram matrix and serve as an
independent check of it. The scheme is linear in the increments, which gives
its exact covariance (riemann_covariance) and hence the discretization
allowance against the quadrature Gram.
"""

import logging
from typing import Optional, Tuple, Union

import numpy as np
from scipy import integrate

from algorithms import covariance, kernels, quadrature
from models.errors import ValidationError
from models.gaussian_vector import PathEnsemble
from models.grid import Grid
from models.gram import GramMatrix
from models.kernel import Example31Spec, MovingAverageKernel
from utils import rng

logger = logging.getLogger(__name__)

Process = Union[MovingAverageKernel, Example31Spec]

DEFAULT_SUBSTEPS = 16
# past cells are uniform on [-PAST_WINDOW * max(T, 1), 0]; beyond, each cell is at most
# DEEP_RATIO times longer than its right neighbour
PAST_WINDOW = 8.0
DEEP_RATIO = 1.1


def _check_inputs(grid: Grid, substeps: int):
    if not (isinstance(substeps, (int, np.integer)) and substeps >= 1):
        raise ValidationError("substeps must be an integer >= 1", field='simulate.substeps')
    if grid.T <= 0:
        raise ValidationError("grid must extend past t = 0", field='grid.times')


def cell_edges(process: Process, grid: Grid, substeps: int, L: Optional[float] = None) -> np.ndarray:
    """Edges of the Brownian increment cells; grid times and kernel breakpoints are edges."""
    _check_inputs(grid, substeps)
    times = grid.times
    step = grid.min_spacing / substeps
    if isinstance(process, Example31Spec):
        if grid.T > 1.0:
            raise ValidationError("dyadic-block example grids must lie in [0, 1]", field='grid.times')
        return quadrature.partition(0.0, 1.0, np.concatenate([times, process.breakpoints]), step)
    if not (L > 0):
        raise ValidationError("L must be positive", field='numerics.L')
    window = PAST_WINDOW * max(grid.T, 1.0)
    breaks = np.concatenate([kernels.breakpoints_in_s(process, times), times, [-window]])
    recent = quadrature.partition(-min(L, window), grid.T, breaks, step)
    if L <= window:
        return recent
    n_deep = int(np.ceil(np.log(L / window) / np.log(DEEP_RATIO)))
    deep = -np.geomspace(L, window, n_deep + 1)
    deep = np.union1d(deep, breaks[(breaks > -L) & (breaks < -window)])
    return np.concatenate([deep[:-1], recent])


def _edge_index(edges: np.ndarray, x: np.ndarray) -> np.ndarray:
    idx = np.clip(np.searchsorted(edges, x), 0, edges.size - 1)
    if not np.allclose(edges[idx], x, rtol=0.0, atol=1e-12):
        raise ValidationError("cell partition misses a required edge", field='grid.times')
    return idx


def example31_paths(spec: Example31Spec, times: np.ndarray, edges: np.ndarray, increments: np.ndarray) -> np.ndarray:
    """
    X_t = sum_n b_n [ int_0^t 1[a_n <= s <= a_{n+1}] dB_s
                      -/+ 2^(2n+3) int_{a_n}^1 (B_{s ^ a_{n+1}} - B_{a_n}) ds (t - a_{n+1})_+ ]

    evaluated on Brownian paths given by their cell increments (one row per path);
    the time integral is the trapezoid rule on the cell edges.
    """
    m = increments.shape[0]
    brownian = np.concatenate([np.zeros((m, 1)), np.cumsum(increments, axis=1)], axis=1)
    out = np.zeros((m, times.size))
    for n in range(spec.n_max):
        a_lo, a_hi = spec.a(n), spec.a(n + 1)
        i_lo, i_hi = _edge_index(edges, np.array([a_lo, a_hi]))
        start = brownian[:, [i_lo]]

        stop = _edge_index(edges, np.minimum(times, a_hi))
        noise = (brownian[:, stop] - start) * (times >= a_lo)

        segment = brownian[:, i_lo:i_hi + 1] - start
        area = integrate.trapezoid(segment, edges[i_lo:i_hi + 1], axis=1) + segment[:, -1] * (1.0 - a_hi)
        ramp = np.maximum(times - a_hi, 0.0)
        drift = 2.0 ** (2 * n + 3) * area[:, None] * ramp[None, :]

        out += spec.b(n) * (noise - spec.sign * drift)
    return out


def scheme_matrix(process: Process, grid: Grid, substeps: int = DEFAULT_SUBSTEPS,
                  L: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    (K, widths, edges) with X_{t_i} = sum_j K[i, j] dB_j and Var(dB_j) = widths[j].

    For kernels K[i, j] is the integrand at the midpoint of cell j. For the dyadic-block example
    it is read off by feeding unit increments through example31_paths.
    """
    if isinstance(process, MovingAverageKernel) and L is None:
        L = covariance.default_truncation(process, grid)
    edges = cell_edges(process, grid, substeps, L)
    widths = np.diff(edges)
    times = grid.times
    if isinstance(process, Example31Spec):
        coefficients = example31_paths(process, times, edges, np.eye(widths.size)).T
    else:
        mids = 0.5 * (edges[:-1] + edges[1:])
        coefficients = np.asarray(kernels.increment_kernel(process, times[:, None], mids[None, :]))
        coefficients = coefficients.reshape(times.size, mids.size)
    return coefficients, widths, edges


def riemann_covariance(process: Process, grid: Grid, substeps: int = DEFAULT_SUBSTEPS,
                       L: Optional[float] = None) -> GramMatrix:
    """Exact covariance of the discretized scheme that direct_simulate samples from."""
    coefficients, widths, _ = scheme_matrix(process, grid, substeps, L)
    sigma = (coefficients * widths) @ coefficients.T
    label = process.label if isinstance(process, MovingAverageKernel) else 'example31'
    depth = 0.0 if isinstance(process, Example31Spec) else (
        covariance.default_truncation(process, grid) if L is None else float(L))
    return covariance.gram_from_matrix(sigma, grid, quad_step=grid.min_spacing / substeps, L=depth,
                                       mode='riemann', label=label)


def discretization_allowance(process: Process, grid: Grid, reference: GramMatrix,
                             substeps: int = DEFAULT_SUBSTEPS, L: Optional[float] = None) -> float:
    """max |Cov(scheme) - reference|, the bias of direct_simulate against a Gram."""
    scheme = riemann_covariance(process, grid, substeps, L)
    return float(np.max(np.abs(scheme.sigma - reference.sigma)))


def direct_simulate(process: Process, grid: Grid, n_paths: int, seed: int,
                    substeps: int = DEFAULT_SUBSTEPS, L: Optional[float] = None,
                    n_threads: int = 1) -> PathEnsemble:
    """Sample the stochastic integral by Riemann sums over Brownian increments."""
    if n_paths < 1:
        raise ValidationError("n_paths must be at least 1", field='simulate.n_paths')
    if isinstance(process, Example31Spec):
        edges = cell_edges(process, grid, substeps)
        roots = np.sqrt(np.diff(edges))
        times = grid.times

        def draw(start, z):
            return example31_paths(process, times, edges, z * roots)

        depth = None
        cells = roots.size
    else:
        depth = covariance.default_truncation(process, grid) if L is None else float(L)
        coefficients, widths, _ = scheme_matrix(process, grid, substeps, depth)
        weighted = (coefficients * np.sqrt(widths)).T

        def draw(start, z):
            return z @ weighted

        cells = widths.size

    logger.debug("direct simulation: %d paths over %d cells", n_paths, cells)
    blocks = rng.map_blocks(seed, n_paths, cells, draw, n_threads)
    return PathEnsemble(grid=grid, paths=np.vstack(blocks), seed=seed, method='direct',
                        substeps=int(substeps), L=depth)
