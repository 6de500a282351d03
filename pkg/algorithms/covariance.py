"""
Gram matrices of moving-average processes on a time grid.

Every Gram is assembled as K diag(w) K^T, where K[i, q] is the integrand of
X_{t_i} at quadrature node s_q, so the result is positive semidefinite up to
rounding and each entry is a self-contained quadrature sum.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional

import numpy as np
from scipy import linalg

from algorithms import kernels, quadrature
from models.errors import NotPositiveSemidefiniteError, QuadratureError, ValidationError
from models.grid import Grid
from models.gram import GramMatrix
from models.kernel import Example31Spec, MovingAverageKernel

logger = logging.getLogger(__name__)

MODES = ('full', 'fresh')
NODE_CHUNK = 4096
SYMMETRY_RTOL = 1e-12
PSD_TOL = 1e-8
EIGEN_FULL_LIMIT = 1024


def default_truncation(kernel: MovingAverageKernel, grid: Grid) -> float:
    return max(100.0 * grid.T, kernel.truncation_hint)


def default_quad_step(grid: Grid) -> float:
    return grid.min_spacing / 64.0


def _accumulate(rows: Callable[[np.ndarray], np.ndarray], nodes: np.ndarray, weights: np.ndarray,
                size: int, n_threads: int = 1) -> np.ndarray:
    """sum over node chunks of K_c diag(w_c) K_c^T, added in chunk order."""
    starts = list(range(0, nodes.size, NODE_CHUNK))

    def partial(start):
        k = rows(nodes[start:start + NODE_CHUNK])
        return (k * weights[start:start + NODE_CHUNK]) @ k.T

    if n_threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            parts = list(pool.map(partial, starts))
    else:
        parts = [partial(start) for start in starts]
    sigma = np.zeros((size, size))
    for part in parts:
        sigma += part
    return sigma


def _finalize(sigma: np.ndarray, psd_tol: float = PSD_TOL):
    """Symmetry and PSD checks; returns (sigma, min eigenvalue, repaired flag)."""
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise ValidationError("covariance must be a square matrix", field='sigma')
    if not np.all(np.isfinite(sigma)):
        raise NotPositiveSemidefiniteError("covariance has non-finite entries")
    norm = float(np.max(np.abs(sigma))) if sigma.size else 0.0
    if norm == 0.0:
        return np.zeros_like(sigma), 0.0, False
    asym = float(np.max(np.abs(sigma - sigma.T)))
    if asym > SYMMETRY_RTOL * norm * max(1, sigma.shape[0]):
        raise NotPositiveSemidefiniteError(f"covariance is not symmetric (max asymmetry {asym:.3g})")
    sigma = 0.5 * (sigma + sigma.T)

    n = sigma.shape[0]
    if n <= EIGEN_FULL_LIMIT:
        eigvals = linalg.eigvalsh(sigma)
        lam_min, lam_max = float(eigvals[0]), float(eigvals[-1])
    else:
        lam_min = float(linalg.eigh(sigma, eigvals_only=True, subset_by_index=[0, 0])[0])
        lam_max = float(np.linalg.norm(sigma))
    scale = max(abs(lam_max), norm)
    if lam_min < -psd_tol * scale:
        raise NotPositiveSemidefiniteError(
            f"smallest eigenvalue {lam_min:.3g} below -{psd_tol:g} * {scale:.3g}")

    repaired = False
    rounding = n * np.finfo(float).eps * scale
    if lam_min < -rounding:
        vals, vecs = linalg.eigh(sigma)
        sigma = (vecs * np.maximum(vals, 0.0)) @ vecs.T
        sigma = 0.5 * (sigma + sigma.T)
        repaired = True
        logger.warning("clamped negative eigenvalues of a %dx%d covariance (min %.3g)", n, n, lam_min)
    return sigma, lam_min, repaired


def gram_from_matrix(matrix, grid: Grid, quad_step: float = 0.0, L: float = 0.0, tail_error: float = 0.0,
                     mode: str = 'imported', psd_tol: float = PSD_TOL, **meta) -> GramMatrix:
    """Wrap a covariance matrix, enforcing symmetry and the PSD check."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.shape != (len(grid), len(grid)):
        raise ValidationError(f"matrix shape {matrix.shape} does not match grid of {len(grid)} points",
                              field='sigma')
    sigma, lam_min, repaired = _finalize(matrix, psd_tol)
    return GramMatrix(grid=grid, sigma=sigma, quad_step=quad_step, L=L, tail_error=tail_error, mode=mode,
                      min_eigenvalue=lam_min, psd_repaired=repaired, **meta)


def _kernel_rule(kernel: MovingAverageKernel, times: np.ndarray, L: float, quad_step: float, mode: str,
                 order: int):
    T = float(times[-1])
    breaks = kernels.breakpoints_in_s(kernel, times)
    singular = np.append(times, 0.0) if kernels.has_endpoint_singularity(kernel) else ()
    if mode == 'full':
        lo, deep = -L, -max(T, quad_step)
    else:
        lo, deep = 0.0, None
    edges = quadrature.partition(lo, T, breaks, quad_step, singular_points=singular, deep_past=deep)
    return quadrature.composite_rule(edges, order)


def _raw_gram(kernel: MovingAverageKernel, times: np.ndarray, L: float, quad_step: float, mode: str,
              order: int, n_threads: int) -> np.ndarray:
    nodes, weights = _kernel_rule(kernel, times, L, quad_step, mode, order)
    integrand = kernels.increment_kernel if mode == 'full' else kernels.fresh_kernel

    def rows(chunk):
        values = integrand(kernel, times[:, None], chunk[None, :])
        return np.asarray(values).reshape(times.size, chunk.size)

    logger.debug("%s gram (%s): %d points, %d nodes", kernel.label, mode, times.size, nodes.size)
    return _accumulate(rows, nodes, weights, times.size, n_threads)


def _converged_gram(kernel, times, L, quad_step, mode, order, n_threads, check, rtol, max_refinements):
    sigma = _raw_gram(kernel, times, L, quad_step, mode, order, n_threads)
    if not check:
        return sigma, quad_step, 0.0
    step = quad_step
    for _ in range(max_refinements):
        finer = _raw_gram(kernel, times, L, step / 2, mode, order, n_threads)
        change = float(np.max(np.abs(finer - sigma)))
        scale = max(float(np.max(np.abs(finer))), np.finfo(float).tiny)
        sigma, step = finer, step / 2
        if change <= rtol * scale:
            return sigma, step, change
    raise QuadratureError(
        f"{kernel.label} gram still changes by {change:.3g} after {max_refinements} step halvings",
        field='numerics.quad_step')


def gram(kernel: MovingAverageKernel, grid: Grid, L: Optional[float] = None, quad_step: Optional[float] = None,
         mode: str = 'full', normalize: bool = False, order: int = quadrature.DEFAULT_ORDER,
         check_convergence: bool = True, conv_rtol: float = 1e-7, max_refinements: int = 3,
         max_tail_error: Optional[float] = 1e-6, psd_tol: float = PSD_TOL, n_threads: int = 1) -> GramMatrix:
    """
    Covariance of the moving average on `grid`.

    mode 'full':  int_{-L}^{min(t_i, t_j)} (f(s-t_i) - f(s)) (f(s-t_j) - f(s)) ds
    mode 'fresh': int_0^{min(t_i, t_j)} f(s-t_i) f(s-t_j) ds, the law given the Brownian past.

    With `normalize` the matrix is divided by Var(X_1) computed the same way.
    `max_tail_error` caps the truncation error relative to the largest variance
    (None disables the cap).
    """
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}, got {mode!r}", field='mode')
    L = default_truncation(kernel, grid) if L is None else float(L)
    quad_step = default_quad_step(grid) if quad_step is None else float(quad_step)
    if not (L > 0):
        raise ValidationError("L must be positive", field='numerics.L')
    if not (quad_step > 0):
        raise ValidationError("quad_step must be positive", field='numerics.quad_step')

    times = grid.times
    sigma, step, change = _converged_gram(kernel, times, L, quad_step, mode, order, n_threads,
                                          check_convergence, conv_rtol, max_refinements)

    normalization = 1.0
    if normalize:
        unit, _, _ = _converged_gram(kernel, np.array([1.0]), L, min(quad_step, 1.0 / 64), mode, order, 1,
                                     check_convergence, conv_rtol, max_refinements)
        normalization = float(unit[0, 0])
        sigma = sigma / normalization

    tail = 0.0
    if mode == 'full':
        tail = max(kernels.tail_bound(kernel, float(t), L) for t in times) / normalization
        reference = max(float(np.max(np.diag(sigma))), np.finfo(float).tiny)
        if max_tail_error is not None and tail > max_tail_error * reference:
            raise QuadratureError(
                f"truncation error {tail:.3g} at L={L:.3g} exceeds {max_tail_error:g} of the largest variance",
                field='numerics.L')

    sigma, lam_min, repaired = _finalize(sigma, psd_tol)
    return GramMatrix(grid=grid, sigma=sigma, quad_step=step, L=L, tail_error=tail, mode=mode,
                      convergence_tol=change, min_eigenvalue=lam_min, psd_repaired=repaired,
                      normalization=normalization, label=kernel.label)


def fbm_cov_closed(t, u, hurst: float):
    """Cov(B^H_t, B^H_u) = (t^2H + u^2H - |t - u|^2H) / 2."""
    if not (0.0 < hurst < 1.0):
        raise ValidationError(f"Hurst index must lie in (0, 1), got {hurst}", field='hurst')
    t_arr, u_arr = np.asarray(t, dtype=float), np.asarray(u, dtype=float)
    if np.any(t_arr < 0) or np.any(u_arr < 0):
        raise ValidationError("times must be nonnegative", field='t')
    h2 = 2.0 * hurst
    out = 0.5 * (t_arr ** h2 + u_arr ** h2 - np.abs(t_arr - u_arr) ** h2)
    return float(out) if out.ndim == 0 else out


def fbm_gram_closed(grid: Grid, hurst: float) -> GramMatrix:
    times = grid.times
    sigma = fbm_cov_closed(times[:, None], times[None, :], hurst)
    return gram_from_matrix(sigma, grid, L=float('inf'), mode='closed', label=f"fbm(H={hurst:g}) closed form")


def example31_gram(spec: Example31Spec, grid: Grid, quad_step: Optional[float] = None,
                   check_convergence: bool = False, conv_rtol: float = 1e-10, max_refinements: int = 3,
                   n_threads: int = 1) -> GramMatrix:
    """
    sum_n int_0^1 kappa_n(t_i, v) kappa_n(t_j, v) dv.

    Each integrand is piecewise quadratic in v between grid times and the a_n,
    so two Gauss nodes per piece integrate it exactly; the optional convergence
    check only guards against a grid that misses a breakpoint.
    """
    times = grid.times
    if times[-1] > 1.0:
        raise ValidationError("dyadic-block example grids must lie in [0, 1]", field='grid.times')
    quad_step = grid.min_spacing if quad_step is None else float(quad_step)
    breaks = np.concatenate([times, spec.breakpoints])

    def build(step):
        edges = quadrature.partition(0.0, 1.0, breaks, step)
        nodes, weights = quadrature.composite_rule(edges, order=2)

        def rows(chunk):
            return kernels.example31_total_kernel(spec, times[:, None], chunk[None, :])

        return _accumulate(rows, nodes, weights, times.size, n_threads)

    sigma = build(quad_step)
    change, step = 0.0, quad_step
    if check_convergence:
        for attempt in range(max_refinements + 1):
            finer = build(step / 2)
            change = float(np.max(np.abs(finer - sigma)))
            sigma, step = finer, step / 2
            if change <= conv_rtol * max(float(np.max(np.abs(sigma))), np.finfo(float).tiny):
                break
        else:
            raise QuadratureError(f"dyadic-block gram still changes by {change:.3g}", field='numerics.quad_step')

    sigma, lam_min, repaired = _finalize(sigma)
    label = f"example31(n_max={spec.n_max}, {'corrected' if spec.corrected_sign else 'published'} sign)"
    return GramMatrix(grid=grid, sigma=sigma, quad_step=step, L=0.0, tail_error=0.0, mode='example31',
                      convergence_tol=change, min_eigenvalue=lam_min, psd_repaired=repaired, label=label)
