"""
Gaussian linear algebra on Gram matrices: pivoted factorization, sequential and
block conditioning (Schur complements) and seeded sampling.
"""

import logging
import math
from typing import Sequence, Tuple, Union

import numpy as np

from algorithms.covariance import gram_from_matrix
from models.errors import (InconsistentConditioningError, NotPositiveSemidefiniteError,
                           ValidationError)
from models.gaussian_vector import GaussianVector, PathEnsemble, PsdFactor
from models.grid import Grid
from models.gram import GramMatrix
from utils import rng

logger = logging.getLogger(__name__)

TAU_RANK = 1e-10
TAU_PSD = 1e-8
PINV_RCOND = 1e-10
CONSISTENCY_TOL = 1e-6


def _matrix(cov: Union[GramMatrix, np.ndarray]) -> np.ndarray:
    sigma = cov.sigma if isinstance(cov, GramMatrix) else np.asarray(cov, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise ValidationError("covariance must be a square matrix", field='sigma')
    return sigma


def factor_psd(cov: Union[GramMatrix, np.ndarray], tau_rank: float = TAU_RANK,
               tau_psd: float = TAU_PSD) -> PsdFactor:
    """
    Pivoted Cholesky factorization of a positive semidefinite matrix.

    Elimination stops once the largest remaining pivot is at most
    tau_rank * (first pivot); the number of accepted pivots is the rank.
    """
    a = _matrix(cov).copy()
    n = a.shape[0]
    norm = float(np.max(np.abs(a))) if n else 0.0
    factor = np.zeros((n, n))
    order = np.arange(n)
    pivot_values = []

    first = None
    for k in range(n):
        d = np.diag(a)[k:]
        j = k + int(np.argmax(d))
        pivot = float(a[j, j])
        if pivot < -tau_psd * norm:
            raise NotPositiveSemidefiniteError(f"pivot {pivot:.3g} below -{tau_psd:g} * {norm:.3g}")
        if first is None:
            first = pivot
        if pivot <= 0.0 or pivot <= tau_rank * first:
            break
        if j != k:
            a[[k, j], :] = a[[j, k], :]
            a[:, [k, j]] = a[:, [j, k]]
            factor[[k, j], :] = factor[[j, k], :]
            order[[k, j]] = order[[j, k]]
        root = math.sqrt(pivot)
        factor[k, k] = root
        factor[k + 1:, k] = a[k + 1:, k] / root
        a[k + 1:, k + 1:] -= np.outer(factor[k + 1:, k], factor[k + 1:, k])
        pivot_values.append(pivot)

    rank = len(pivot_values)
    # undo the permutation so that factor @ factor.T matches the input ordering
    restored = np.zeros((n, rank))
    restored[order] = factor[:, :rank]
    logger.debug("pivoted factorization: size %d, rank %d", n, rank)
    return PsdFactor(factor=restored, rank=rank, pivots=order[:rank].copy(),
                     pivot_values=np.array(pivot_values))


def conditional_variances_in_order(cov: Union[GramMatrix, np.ndarray], tau: float = TAU_RANK) -> Tuple[np.ndarray, np.ndarray]:
    """
    Var(Y_i | Y_0, ..., Y_{i-1}) for every i, in the given coordinate order.

    Sequential Schur complements: a Cholesky sweep without pivoting that skips
    coordinates whose residual variance is at most tau * (largest variance), which
    is conditioning with a pseudo-inverse on the past block. Returns the residual
    variances (clamped at 0) and the mask of coordinates kept as new directions.
    """
    sigma = _matrix(cov)
    n = sigma.shape[0]
    scale = float(np.max(np.diag(sigma))) if n else 0.0
    threshold = tau * scale
    basis = np.zeros((n, n))
    residual = np.zeros(n)
    kept = np.zeros(n, dtype=bool)
    k = 0
    for i in range(n):
        row = basis[i, :k]
        d = float(sigma[i, i] - row @ row)
        residual[i] = max(d, 0.0)
        if d > threshold and d > 0.0:
            root = math.sqrt(d)
            basis[i, k] = root
            basis[i + 1:, k] = (sigma[i + 1:, i] - basis[i + 1:, :k] @ row) / root
            kept[i] = True
            k += 1
    return residual, kept


def condition(gv: GaussianVector, observed: Sequence[int], values: Sequence[float],
              rcond: float = PINV_RCOND, consistency_tol: float = CONSISTENCY_TOL) -> GaussianVector:
    """Law of the unobserved coordinates given X[observed] = values (Schur complement)."""
    obs = np.asarray(observed, dtype=int).ravel()
    vals = np.asarray(values, dtype=float).ravel()
    n = gv.dim
    if obs.size != vals.size:
        raise ValidationError("observed indices and values differ in length", field='values')
    if obs.size != np.unique(obs).size or np.any(obs < 0) or np.any(obs >= n):
        raise ValidationError("observed indices must be distinct and in range", field='observed')
    if not np.all(np.isfinite(vals)):
        raise ValidationError("observed values must be finite", field='values')
    free = np.setdiff1d(np.arange(n), obs)
    if free.size == 0:
        raise ValidationError("every coordinate is observed; nothing left to condition", field='observed')

    sigma = gv.cov
    s_oo = sigma[np.ix_(obs, obs)]
    s_fo = sigma[np.ix_(free, obs)]
    s_ff = sigma[np.ix_(free, free)]
    residual = vals - gv.mean[obs]

    if obs.size:
        s_oo_pinv = np.linalg.pinv(s_oo, rcond=rcond, hermitian=True)
        weights = s_oo_pinv @ residual
        outside = residual - s_oo @ weights
        if np.linalg.norm(outside) > consistency_tol * (1.0 + np.linalg.norm(residual)):
            raise InconsistentConditioningError(
                f"observed values are off the support of the observed block by {np.linalg.norm(outside):.3g}",
                field='values')
        mean = gv.mean[free] + s_fo @ weights
        cov = s_ff - s_fo @ s_oo_pinv @ s_fo.T
    else:
        mean, cov = gv.mean[free], s_ff

    sub_grid = Grid(gv.gram.grid.times[free])
    gram = gram_from_matrix(0.5 * (cov + cov.T), sub_grid, quad_step=gv.gram.quad_step, L=gv.gram.L,
                            tail_error=gv.gram.tail_error, mode='conditional', label=gv.gram.label)
    return GaussianVector(mean, gram)


def sample(gv: GaussianVector, n_paths: int, seed: int, n_threads: int = 1,
           tau_rank: float = TAU_RANK) -> PathEnsemble:
    """n_paths draws mean + F z with F F^T = covariance; reproducible from the seed alone."""
    if n_paths < 1:
        raise ValidationError("n_paths must be at least 1", field='n_paths')
    psd = factor_psd(gv.gram, tau_rank=tau_rank)
    factor_t = psd.factor.T

    def draw(start, z):
        return gv.mean + z @ factor_t

    blocks = rng.map_blocks(seed, n_paths, psd.rank, draw, n_threads)
    return PathEnsemble(grid=gv.gram.grid, paths=np.vstack(blocks), seed=seed, method='cholesky')


def empirical_covariance(ensemble: PathEnsemble) -> np.ndarray:
    return np.atleast_2d(np.cov(ensemble.paths, rowvar=False))


def covariance_standard_errors(sigma: np.ndarray, n_paths: int) -> np.ndarray:
    """Normal-theory standard error of each sample covariance entry."""
    diag = np.diag(sigma)
    return np.sqrt((np.outer(diag, diag) + sigma ** 2) / n_paths)
