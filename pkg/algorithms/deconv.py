"""
Volterra convolution on uniform grids, its regularized inversion and support edges.

h lives on the grid -T, ..., -step, 0 (increasing time, h[-1] = h(0)) and g, phi
on 0, step, ..., T. The operator is the left-Riemann sum
    (h * g)(t_i) = step * sum_{j <= i} h(t_j - t_i) g(t_j),
a lower-triangular Toeplitz matrix whose structural zeros carry the support
edges of h and g.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from models.errors import SingularOperatorError, ValidationError
from models.reports import DeconvResult, LadderStep

logger = logging.getLogger(__name__)

LAMBDA_LADDER = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9, 1e-10, 0.0)
EDGE_RTOL = 1e-12
PHI_ZERO_TOL = 1e-12


def _vector(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0 or not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} must be a nonempty finite vector", field=f'deconv.{name}')
    return arr


def volterra_matrix(h: Sequence[float], step: float) -> np.ndarray:
    """Lower-triangular Toeplitz matrix of g -> h * g."""
    h_arr = _vector(h, 'h')
    if not (step > 0):
        raise ValidationError("step must be positive", field='deconv.step')
    column = h_arr[::-1] * step
    return linalg.toeplitz(column, np.zeros(h_arr.size))


def conv_apply(h: Sequence[float], g: Sequence[float], step: float) -> np.ndarray:
    h_arr, g_arr = _vector(h, 'h'), _vector(g, 'g')
    if h_arr.size != g_arr.size:
        raise ValidationError(f"h has {h_arr.size} samples but g has {g_arr.size}", field='deconv.g')
    return volterra_matrix(h_arr, step) @ g_arr


def edge_of_support(samples: Sequence[float], step: float, side: str = 'negative',
                    tol: Optional[float] = None) -> float:
    """
    Depth of the zero stretch next to 0, at grid resolution.

    side 'negative': samples on [-T, 0], the distance from 0 to the nearest sample
    with |value| > tol. side 'positive': samples on [0, T], likewise from the left.
    An all-zero vector returns the full interval length. tol defaults to
    1e-12 * max |samples|.
    """
    arr = _vector(samples, 'samples')
    if side not in ('negative', 'positive'):
        raise ValidationError("side must be 'negative' or 'positive'", field='side')
    if tol is None:
        tol = EDGE_RTOL * float(np.max(np.abs(arr)))
    if tol < 0:
        raise ValidationError("tol must be nonnegative", field='tol')
    ordered = arr[::-1] if side == 'negative' else arr
    nonzero = np.flatnonzero(np.abs(ordered) > tol)
    if nonzero.size == 0:
        return (arr.size - 1) * step
    return float(nonzero[0]) * step


def _errors(residual: np.ndarray, step: float) -> Tuple[float, float]:
    return float(np.max(np.abs(residual))), float(math.sqrt(step * np.sum(residual ** 2)))


def deconv_solve(h: Sequence[float], phi: Sequence[float], lam: float, step: float) -> DeconvResult:
    """
    g minimizing ||h * g - phi||^2 + lam ||g||^2 on the grid.

    lam = 0 is forward substitution on the triangular operator and raises
    SingularOperatorError when its diagonal h(0) * step vanishes; lam > 0 solves
    the stacked least-squares form of the normal equations.
    """
    h_arr, phi_arr = _vector(h, 'h'), _vector(phi, 'phi')
    if h_arr.size != phi_arr.size:
        raise ValidationError(f"h has {h_arr.size} samples but phi has {phi_arr.size}", field='deconv.phi')
    if abs(phi_arr[0]) > PHI_ZERO_TOL * max(1.0, float(np.max(np.abs(phi_arr)))):
        raise ValidationError(f"phi(0) must be 0, got {phi_arr[0]:.3g}", field='deconv.phi')
    if not np.any(h_arr != 0.0):
        raise ValidationError("h is identically zero", field='deconv.h')
    if not (lam >= 0):
        raise ValidationError("lambda must be nonnegative", field='deconv.lam')

    op = volterra_matrix(h_arr, step)
    edge_h = edge_of_support(h_arr, step, 'negative')
    if lam == 0.0:
        diagonal = abs(h_arr[-1]) * step
        if diagonal <= EDGE_RTOL * float(np.max(np.abs(h_arr))) * step:
            raise SingularOperatorError("h(0) = 0 makes the triangular operator singular; use lambda > 0",
                                        field='deconv.lam')
        g = linalg.solve_triangular(op, phi_arr, lower=True)
        if not np.all(np.isfinite(g)):
            raise SingularOperatorError("forward substitution overflowed; use lambda > 0", field='deconv.lam')
    else:
        n = h_arr.size
        stacked = np.vstack([op, math.sqrt(lam) * np.eye(n)])
        rhs = np.concatenate([phi_arr, np.zeros(n)])
        g = linalg.lstsq(stacked, rhs)[0]

    approximation = op @ g
    sup_error, l2_error = _errors(approximation - phi_arr, step)
    logger.debug("deconvolution at lambda=%g: sup error %.3g", lam, sup_error)
    return DeconvResult(g=g, approximation=approximation, sup_error=sup_error, l2_error=l2_error,
                        lam=float(lam), edge_h=edge_h, step=float(step))


def solve_ladder(h: Sequence[float], phi: Sequence[float], step: float,
                 lambdas: Iterable[float] = LAMBDA_LADDER, n_threads: int = 1) -> DeconvResult:
    """Solve along a fixed lambda ladder and keep the smallest sup error; singular lambda = 0 is skipped."""
    lambdas = tuple(float(lam) for lam in lambdas)
    if not lambdas:
        raise ValidationError("lambda ladder is empty", field='deconv.lambdas')

    def attempt(lam):
        try:
            return deconv_solve(h, phi, lam, step)
        except SingularOperatorError as exc:
            logger.info("lambda=%g skipped: %s", lam, exc.message)
            return None

    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            results = list(pool.map(attempt, lambdas))
    else:
        results = [attempt(lam) for lam in lambdas]

    solved = [r for r in results if r is not None]
    if not solved:
        raise SingularOperatorError("no lambda on the ladder gave a solution", field='deconv.lambdas')
    best = min(solved, key=lambda r: r.sup_error)
    ladder = tuple((lam, None if r is None else r.sup_error) for lam, r in zip(lambdas, results))
    logger.debug("ladder choice lambda=%g (sup error %.3g)", best.lam, best.sup_error)
    return DeconvResult(g=best.g, approximation=best.approximation, sup_error=best.sup_error,
                        l2_error=best.l2_error, lam=best.lam, edge_h=best.edge_h, step=best.step, ladder=ladder)


def sample_problem(h_fn: Callable, phi_fn: Callable, T: float, step: float) -> Tuple[np.ndarray, np.ndarray]:
    """h on [-T, 0] and phi on [0, T] sampled on the grid of the given step."""
    n = int(round(T / step))
    if n < 1 or not math.isclose(n * step, T, rel_tol=1e-9):
        raise ValidationError("T must be a whole number of steps", field='deconv.step')
    times = step * np.arange(n + 1)
    return np.asarray(h_fn(times - T), dtype=float), np.asarray(phi_fn(times), dtype=float)


def refinement_ladder(h_fn: Callable, phi_fn: Callable, ks: Iterable[int] = range(4, 10),
                      T: float = 1.0) -> List[LadderStep]:
    """sup errors along (step, lambda) = (2^-k, 10^-2k)."""
    rungs = []
    for k in ks:
        step, lam = 2.0 ** (-k), 10.0 ** (-2 * k)
        h, phi = sample_problem(h_fn, phi_fn, T, step)
        result = deconv_solve(h, phi, lam, step)
        rungs.append(LadderStep(step=step, lam=lam, sup_error=result.sup_error, l2_error=result.l2_error))
    return rungs
