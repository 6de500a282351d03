"""
Conditional full support diagnostics on a grid.

The discrete criterion asks that every increment X_{t_n} - X_{t_{n-1}} keeps
positive variance given X_{t_0}, ..., X_{t_{n-1}}. Grid evidence is complemented
by a scan for linear functionals with vanishing variance, Monte Carlo tube
probabilities, the history drift of the conditional law and the deterministic
shifts that leave its support unchanged.
"""

import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, stats

from algorithms import deconv, gaussian, kernels
from models.errors import ValidationError
from models.gaussian_vector import GaussianVector
from models.grid import Grid
from models.gram import GramMatrix
from models.kernel import MovingAverageKernel
from models.reports import CfsReport, DegenerateFunctional, TubeEstimate
from utils import rng

logger = logging.getLogger(__name__)

TAU_CFS = 1e-10
TAU_DEGEN = 1e-6
SMALLEST_EIGENVECTORS = 3
CONFIDENCE = 0.95
# Broadie-Glasserman-Kou continuity correction for discretely monitored barriers
MONITORING_SHIFT = 0.5826


def _difference_operator(n: int) -> np.ndarray:
    """Maps (X_0, ..., X_N) to (X_0, X_1 - X_0, ..., X_N - X_{N-1})."""
    op = np.eye(n)
    op[np.arange(1, n), np.arange(0, n - 1)] = -1.0
    return op


def increment_gram(gram: GramMatrix) -> np.ndarray:
    """Covariance of (X_{t_0}, D_1, ..., D_N)."""
    op = _difference_operator(gram.size)
    sigma = op @ gram.sigma @ op.T
    return 0.5 * (sigma + sigma.T)


def _increment_scale(sigma_y: np.ndarray) -> float:
    return float(np.max(np.diag(sigma_y))) if sigma_y.size else 0.0


def increment_conditional_variances(gram: GramMatrix, tau: float = TAU_CFS) -> np.ndarray:
    """
    v_n = Var(D_n | X_{t_0}, ..., X_{t_{n-1}}) for n = 1..N.

    The conditioning sigma-algebra equals that of (X_{t_0}, D_1, ..., D_{n-1}), so
    the v_n are the residual variances of a sequential sweep over the increment
    Gram; past directions below tau * (largest increment-Gram variance) are
    treated as degenerate.
    """
    if gram.size < 2:
        raise ValidationError("the criterion needs a grid of at least two points", field='grid.times')
    residual, _ = gaussian.conditional_variances_in_order(increment_gram(gram), tau=tau)
    return residual[1:]


def trapezoid_weights(grid: Grid) -> np.ndarray:
    """Weights w with w^T X the trapezoid approximation of the time integral over [t_0, T]."""
    times = grid.times
    weights = np.zeros(times.size)
    if times.size < 2:
        return weights
    steps = np.diff(times)
    weights[:-1] += 0.5 * steps
    weights[1:] += 0.5 * steps
    return weights


def degenerate_functional_scan(gram: GramMatrix, extra_weights: Optional[Sequence[Sequence[float]]] = None,
                               k_smallest: int = SMALLEST_EIGENVECTORS,
                               tau: float = TAU_DEGEN) -> List[DegenerateFunctional]:
    """
    Linear functionals w^T X with Var(w^T X) <= tau * (largest variance).

    The trapezoid functional for the time integral is always reported; the
    eigenvectors of the k smallest eigenvalues and caller-supplied weights are
    reported only when degenerate.
    """
    sigma = gram.sigma
    n = gram.size
    threshold = tau * gram.scale

    def variance(w):
        return float(w @ sigma @ w)

    trapezoid = trapezoid_weights(gram.grid)
    found = [DegenerateFunctional('trapezoid', trapezoid, variance(trapezoid))]

    k = min(k_smallest, n)
    if k > 0:
        _, vecs = linalg.eigh(sigma, subset_by_index=[0, k - 1])
        for i in range(k):
            w = vecs[:, i]
            var = variance(w)
            if var <= threshold:
                found.append(DegenerateFunctional(f'eigenvector[{i}]', w, var))

    for i, weights in enumerate(extra_weights or ()):
        w = np.asarray(weights, dtype=float).ravel()
        if w.size != n:
            raise ValidationError(f"weights #{i} have {w.size} entries, grid has {n}", field='cfs.extra_weights')
        var = variance(w)
        if var <= threshold:
            found.append(DegenerateFunctional(f'extra[{i}]', w, var))

    logger.debug("degenerate scan: %d functionals at threshold %.3g", len(found), threshold)
    return found


def wilson_interval(hits: int, n: int, confidence: float = CONFIDENCE) -> Tuple[float, float]:
    if n <= 0:
        return 0.0, 1.0
    z = stats.norm.ppf(0.5 + confidence / 2.0)
    p = hits / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def _estimate(eps: float, hits: int, n_paths: int, label: str) -> TubeEstimate:
    low, high = wilson_interval(hits, n_paths)
    return TubeEstimate(eps=float(eps), estimate=hits / n_paths, ci_low=low, ci_high=high,
                        n_paths=n_paths, hits=hits, target_label=label)


def tube_probabilities(gv: GaussianVector, target: Sequence[float], eps_list: Sequence[float], n_paths: int,
                       seed: int, n_threads: int = 1, label: str = 'psi') -> List[TubeEstimate]:
    """
    P(max_n |X_{t_n} - psi_n| < eps) for every eps, from one set of paths.

    The estimates share their random numbers, so they are nondecreasing in eps.
    """
    psi = np.asarray(target, dtype=float).ravel()
    eps_arr = np.asarray(eps_list, dtype=float).ravel()
    if psi.size != gv.dim:
        raise ValidationError(f"target has {psi.size} entries, grid has {gv.dim}", field='tube.target')
    if not np.all(np.isfinite(psi)):
        raise ValidationError("target must be finite", field='tube.target')
    if eps_arr.size == 0 or np.any(~(eps_arr > 0)):
        raise ValidationError("eps must be positive", field='tube.eps')
    if n_paths < 1:
        raise ValidationError("n_paths must be at least 1", field='tube.n_paths')
    start_gap = abs(gv.mean[0] - psi[0])
    if start_gap >= eps_arr.min():
        logger.warning("target starts %.3g away from the process start; small tubes are empty", start_gap)

    psd = gaussian.factor_psd(gv.gram)
    factor_t = psd.factor.T
    offset = gv.mean - psi

    def deviations(start, z):
        return np.max(np.abs(offset + z @ factor_t), axis=1)

    sup_dev = np.concatenate(rng.map_blocks(seed, n_paths, psd.rank, deviations, n_threads))
    return [_estimate(eps, int(np.count_nonzero(sup_dev < eps)), n_paths, label) for eps in eps_arr]


def tube_probability(gv: GaussianVector, target: Sequence[float], eps: float, n_paths: int, seed: int,
                     n_threads: int = 1, label: str = 'psi') -> TubeEstimate:
    return tube_probabilities(gv, target, [eps], n_paths, seed, n_threads, label)[0]


def brownian_sup_series(a: float, T: float = 1.0, step: Optional[float] = None, terms: int = 50) -> float:
    """
    P(sup_{[0, T]} |B| < a) by the reflection series
        (4 / pi) sum_k (-1)^k / (2k + 1) exp(-(2k + 1)^2 pi^2 T / (8 a^2)).

    With a monitoring step the barrier is moved out by 0.5826 sqrt(step), the
    standard correction for a maximum taken over grid points only.
    """
    if not (a > 0 and T > 0):
        raise ValidationError("barrier and horizon must be positive", field='tube.eps')
    barrier = a + (MONITORING_SHIFT * math.sqrt(step) if step else 0.0)
    k = np.arange(terms)
    odd = 2 * k + 1
    series = (-1.0) ** k / odd * np.exp(-odd ** 2 * math.pi ** 2 * T / (8.0 * barrier ** 2))
    return float(4.0 / math.pi * np.sum(series))


def brownian_tube_walk(a: float, T: float, n_steps: int, n_paths: int, seed: int,
                       n_threads: int = 1) -> TubeEstimate:
    """Random-walk Monte Carlo of P(max_k |B_{k T / n_steps}| < a), independent of any Gram."""
    if n_steps < 1 or n_paths < 1:
        raise ValidationError("n_steps and n_paths must be positive", field='tube.n_paths')
    root = math.sqrt(T / n_steps)

    def deviations(start, z):
        return np.max(np.abs(np.cumsum(z * root, axis=1)), axis=1)

    sup_dev = np.concatenate(rng.map_blocks(seed, n_paths, n_steps, deviations, n_threads))
    return _estimate(a, int(np.count_nonzero(sup_dev < a)), n_paths, 'brownian random walk')


def history_drift(kernel: MovingAverageKernel, past_increments: Sequence[float], grid: Grid,
                  L: Optional[float] = None, past_edges: Optional[Sequence[float]] = None) -> np.ndarray:
    """
    phi(u) = sum_j (f(v_j - u) - f(v_j)) dB_j, the conditional mean of X_u given the Brownian past.

    The past is given by increments dB_j over cells of [-L, 0]: uniform cells when
    only L is given, or explicit cell edges. v_j is the cell midpoint.
    """
    increments = np.asarray(past_increments, dtype=float).ravel()
    if past_edges is None:
        if L is None or not (L > 0):
            raise ValidationError("history drift needs L > 0 or explicit past edges", field='numerics.L')
        edges = np.linspace(-float(L), 0.0, increments.size + 1)
    else:
        edges = np.asarray(past_edges, dtype=float).ravel()
        if edges.size != increments.size + 1 or np.any(np.diff(edges) <= 0) or edges[-1] > 0:
            raise ValidationError("past edges must be increasing, end at or before 0 and bound every increment",
                                  field='past_edges')
    mids = 0.5 * (edges[:-1] + edges[1:])
    times = grid.times
    values = np.asarray(kernels.history_kernel(kernel, times[:, None], mids[None, :]))
    return values.reshape(times.size, mids.size) @ increments


def reachable_shift(kernel: MovingAverageKernel, g: Sequence[float], grid: Grid) -> np.ndarray:
    """
    u -> int_0^u f(v - u) g(v) dv on a uniform grid starting at 0.

    The same left-Riemann Volterra operator as deconv.conv_apply, with h the
    samples of f on [-T, 0].
    """
    g_arr = np.asarray(g, dtype=float).ravel()
    times = grid.times
    if g_arr.size != times.size:
        raise ValidationError(f"g has {g_arr.size} entries, grid has {times.size}", field='g')
    if times.size < 2:
        return np.zeros(times.size)
    if times[0] != 0.0 or not grid.is_uniform():
        raise ValidationError("shifts are computed on uniform grids starting at 0", field='grid.times')
    step = float(times[1] - times[0])
    h = np.asarray(kernels.eval_f(kernel, times - grid.T))
    return deconv.conv_apply(h, g_arr, step)


def shifted_support_rank(gv: GaussianVector, shift: Sequence[float]) -> Tuple[int, int]:
    """Ranks of the law before and after adding a deterministic shift to its mean."""
    shift_arr = np.asarray(shift, dtype=float).ravel()
    if shift_arr.size != gv.dim:
        raise ValidationError("shift length does not match the vector", field='shift')
    shifted = GaussianVector(gv.mean + shift_arr, gv.gram)
    return gaussian.factor_psd(gv.gram).rank, gaussian.factor_psd(shifted.gram).rank


def check_cfs(gram: GramMatrix, tau_cfs: float = TAU_CFS, tau_degen: float = TAU_DEGEN,
              extra_weights: Optional[Sequence[Sequence[float]]] = None, k_smallest: int = SMALLEST_EIGENVECTORS,
              tube_targets: Sequence[Tuple[str, Sequence[float]]] = (), eps_list: Sequence[float] = (),
              n_paths: int = 0, seed: int = 0, n_threads: int = 1) -> CfsReport:
    """Full grid-level report: conditional variances, verdict, ranks, degenerate functionals, tubes."""
    sigma_y = increment_gram(gram)
    scale = _increment_scale(sigma_y)
    variances = increment_conditional_variances(gram, tau=tau_cfs)
    threshold = tau_cfs * scale
    verdict = bool(np.all(variances > threshold))
    min_index = int(np.argmin(variances)) + 1

    eigvals = linalg.eigh(gram.sigma, eigvals_only=True, subset_by_index=[0, 0])
    functionals = degenerate_functional_scan(gram, extra_weights, k_smallest, tau_degen)

    tubes = []
    if tube_targets and len(eps_list):
        gv = GaussianVector.centered(gram)
        for label, psi in tube_targets:
            tubes.extend(tube_probabilities(gv, psi, eps_list, n_paths, seed, n_threads, label))

    if not verdict:
        logger.info("grid criterion fails at increment %d (variance %.3g)", min_index, variances[min_index - 1])
    return CfsReport(
        cond_variances=variances,
        min_cond_variance=float(variances[min_index - 1]),
        min_index=min_index,
        grid_verdict=verdict,
        tolerance=threshold,
        rank=gaussian.factor_psd(gram).rank,
        increment_rank=gaussian.factor_psd(sigma_y, tau_rank=tau_cfs).rank,
        smallest_eigenvalue=float(eigvals[0]),
        degenerate_functionals=functionals,
        tube_estimates=tubes,
    )
