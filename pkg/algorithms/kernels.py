"""
Moving-average kernels f and the integrands they induce.

A Brownian moving average is X_t = int_{-inf}^t (f(s - t) - f(s)) dB_s with f = 0
on [0, inf). Everything here is a pure function of an immutable kernel.
"""

import logging
from fractions import Fraction
from typing import Dict, Iterable, Sequence, Union

import numpy as np

from algorithms import quadrature
from models.errors import ValidationError
from models.grid import Grid
from models.kernel import Example31Spec, MovingAverageKernel, TwoSidedKernel

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


def _as_finite_array(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} must be finite", field=name)
    return arr


def _unwrap(result: np.ndarray, shape) -> ArrayLike:
    result = np.asarray(result).reshape(shape)
    return float(result) if result.ndim == 0 else result


def _f_values(kernel: MovingAverageKernel, x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x, dtype=float)
    neg = x < 0
    if kernel.family == 'fbm':
        out[neg] = (-x[neg]) ** (kernel.hurst - 0.5)
    elif kernel.family == 'indicator':
        out[neg & (x >= -kernel.width)] = 1.0
    else:
        xs = np.asarray(kernel.xs)
        inside = neg & (x >= xs[0]) & (x <= xs[-1])
        out[inside] = np.interp(x[inside], xs, np.asarray(kernel.vals))
    return kernel.scale * out


def _difference(kernel: MovingAverageKernel, t: np.ndarray, s: np.ndarray) -> np.ndarray:
    """f(s - t) - f(s) for t >= 0, free of cancellation for the fbm power law in the deep past."""
    out = _f_values(kernel, s - t) - _f_values(kernel, s)
    if kernel.family == 'fbm' and kernel.hurst != 0.5:
        alpha = kernel.hurst - 0.5
        past = s < 0
        depth = -s[past]
        out[past] = kernel.scale * depth ** alpha * np.expm1(alpha * np.log1p(t[past] / depth))
    return out


def eval_f(kernel: MovingAverageKernel, x: ArrayLike) -> ArrayLike:
    """f(x); exactly 0 for x >= 0."""
    arr = _as_finite_array(x, 'x')
    return _unwrap(_f_values(kernel, np.atleast_1d(arr)), arr.shape)


def increment_kernel(kernel: MovingAverageKernel, t: ArrayLike, s: ArrayLike) -> ArrayLike:
    """f(s - t) - f(s), the integrand of X_t against dB_s; zero for s > t."""
    t_arr = _as_finite_array(t, 't')
    s_arr = _as_finite_array(s, 's')
    if np.any(t_arr < 0):
        raise ValidationError("t must be nonnegative", field='t')
    t_b, s_b = np.broadcast_arrays(t_arr, s_arr)
    t_b = np.atleast_1d(t_b).astype(float)
    s_b = np.atleast_1d(s_b).astype(float)
    out = _difference(kernel, t_b, s_b)
    out[s_b > t_b] = 0.0
    return _unwrap(out, np.broadcast(t_arr, s_arr).shape)


def fresh_kernel(kernel: MovingAverageKernel, t: np.ndarray, s: np.ndarray) -> np.ndarray:
    """f(s - t) on 0 <= s <= t, zero elsewhere."""
    t_b, s_b = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(s, dtype=float))
    out = _f_values(kernel, np.atleast_1d(s_b - t_b))
    out[np.atleast_1d((s_b < 0) | (s_b > t_b))] = 0.0
    return out.reshape(t_b.shape)


def history_kernel(kernel: MovingAverageKernel, t: np.ndarray, s: np.ndarray) -> np.ndarray:
    """f(s - t) - f(s) on s <= 0, zero elsewhere."""
    t_b, s_b = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(s, dtype=float))
    s1 = np.atleast_1d(s_b).astype(float)
    out = _difference(kernel, np.atleast_1d(t_b).astype(float), s1)
    out[s1 > 0] = 0.0
    return out.reshape(t_b.shape)


def kernel_breakpoints(kernel: MovingAverageKernel) -> np.ndarray:
    """Points x <= 0 where f is not smooth."""
    if kernel.family == 'fbm':
        return np.array([0.0])
    if kernel.family == 'indicator':
        return np.array([-kernel.width, 0.0])
    return np.unique(np.append(np.asarray(kernel.xs), 0.0))


def has_endpoint_singularity(kernel: MovingAverageKernel) -> bool:
    """True when f or its derivative blows up as x -> 0-."""
    return kernel.family == 'fbm' and kernel.hurst != 0.5


def tail_bound(kernel: MovingAverageKernel, t: float, L: float) -> float:
    """Upper estimate of int_{-inf}^{-L} (f(s - t) - f(s))^2 ds."""
    if not (L > 0):
        raise ValidationError("L must be positive", field='L')
    if t < 0:
        raise ValidationError("t must be nonnegative", field='t')
    scale2 = kernel.scale ** 2

    if kernel.family == 'fbm':
        alpha = kernel.hurst - 0.5
        if alpha == 0.0 or t == 0.0:
            return 0.0
        # |(|s|+t)^a - |s|^a| <= |a| t |s|^(a-1) for |s| >= L
        H = kernel.hurst
        return scale2 * alpha ** 2 * t ** 2 * L ** (2 * H - 2) / (2 - 2 * H)

    if kernel.family == 'indicator':
        c = kernel.width
        # measure of {s < -L} where exactly one of f(s-t), f(s) is 1
        return scale2 * (max(0.0, c - L) - max(0.0, c - L - t))

    x0 = kernel.xs[0]
    if -L <= x0:
        return 0.0
    breaks = np.concatenate([kernel_breakpoints(kernel), kernel_breakpoints(kernel) + t])
    edges = quadrature.partition(x0, -L, breaks, max_step=(-L - x0))
    return quadrature.integrate(lambda s: history_kernel(kernel, t, s) ** 2, edges)


def two_sided(kernel: MovingAverageKernel, L: float, grid: Grid) -> TwoSidedKernel:
    """Fresh/history split of the integrand over the working grid."""
    bound = max(tail_bound(kernel, float(t), L) for t in grid.times)

    def fresh(t, s):
        return fresh_kernel(kernel, t, s)

    def history(t, s):
        s_arr = np.asarray(s, dtype=float)
        return np.where(s_arr >= -L, history_kernel(kernel, t, s_arr), 0.0)

    return TwoSidedKernel(fresh=fresh, history=history, L=L, tail_error_bound=bound)


def support_edge(kernel: MovingAverageKernel) -> float:
    """Largest a <= 0 such that f = 0 almost everywhere on [a, 0]."""
    if kernel.family != 'tabulated':
        return 0.0
    vals = kernel.vals
    k = len(vals) - 1
    while k > 0 and vals[k] == 0.0 and vals[k - 1] == 0.0:
        k -= 1
    return min(kernel.xs[k], 0.0)


def shift_to_edge(kernel: MovingAverageKernel) -> MovingAverageKernel:
    """Kernel x -> f(x + a) whose support reaches 0; a = support_edge(kernel)."""
    a = support_edge(kernel)
    if a == 0.0:
        return kernel
    # knots past the edge carry zeros only
    keep = kernel.xs.index(a) + 1
    xs = [x - a for x in kernel.xs[:keep]]
    logger.debug("shifting %s right by %g", kernel.label, -a)
    return MovingAverageKernel.tabulated(xs, kernel.vals[:keep], scale=kernel.scale)


def truncated_square_integral(kernel: MovingAverageKernel, t: float, L: float) -> float:
    """int_{-L}^{t} (f(s - t) - f(s))^2 ds."""
    breaks = np.concatenate([kernel_breakpoints(kernel), kernel_breakpoints(kernel) + t, [0.0]])
    singular = (0.0, t) if has_endpoint_singularity(kernel) else ()
    deep = -max(t, 1.0)
    edges = quadrature.partition(-L, t, breaks, max_step=max(t, 1.0) / 64,
                                 singular_points=singular, deep_past=deep)
    return quadrature.integrate(lambda s: increment_kernel(kernel, t, s) ** 2, edges)


def validate_kernel(kernel: MovingAverageKernel, probe_times: Sequence[float] = (0.5, 1.0, 2.0),
                    tol: float = 1e-6, doublings: int = 3) -> Dict:
    """Check the three kernel invariants; raises ValidationError on failure."""
    probes = np.array([0.0, 1e-9, 0.5, 1.0, 10.0])
    if np.any(eval_f(kernel, probes) != 0.0):
        raise ValidationError(f"{kernel.label} does not vanish on [0, inf)", field='family')

    if kernel.family == 'tabulated':
        nonzero = any(abs(v) > 0 for v in kernel.vals)
    else:
        nonzero = np.any(np.abs(eval_f(kernel, -np.linspace(1e-3, 1.0, 64))) > 0)
    if not nonzero:
        raise ValidationError(f"{kernel.label} is zero almost everywhere", field='vals')

    changes = {}
    L = kernel.truncation_hint
    for t in probe_times:
        values = [truncated_square_integral(kernel, t, L * 2 ** k) for k in range(doublings + 1)]
        change = max(abs(b - a) for a, b in zip(values, values[1:]))
        changes[float(t)] = change
        if change > tol * max(1.0, abs(values[-1])):
            raise ValidationError(
                f"truncated square integral of {kernel.label} at t={t} still moves by {change:.3g} "
                f"under doubling of L={L:.3g}", field='truncation_hint')
    return {'label': kernel.label, 'doubling_changes': changes, 'semimartingale': kernel.semimartingale}


# Dyadic-block counterexample

def example31_kernel(spec: Example31Spec, n: int, t: ArrayLike, v: ArrayLike) -> ArrayLike:
    """
    Integrand of the n-th component against dB_v:
        b_n 1[a_n <= v <= a_{n+1}] (1[v <= t] - sign 2^(2n+3) (t - a_{n+1})_+ (1 - v)).
    """
    if not (0 <= n < spec.n_max):
        raise ValidationError(f"component index {n} outside [0, {spec.n_max})", field='n')
    t_arr = _as_finite_array(t, 't')
    v_arr = _as_finite_array(v, 'v')
    t_b, v_b = np.broadcast_arrays(t_arr, v_arr)
    a_lo, a_hi = spec.a(n), spec.a(n + 1)
    block = (v_b >= a_lo) & (v_b <= a_hi) & (v_b <= t_b)
    drift = spec.sign * 2.0 ** (2 * n + 3) * np.maximum(t_b - a_hi, 0.0) * (1.0 - v_b)
    out = np.where(block, spec.b(n) * (1.0 - drift), 0.0)
    return _unwrap(out, t_b.shape)


def example31_total_kernel(spec: Example31Spec, t: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Sum over components; their v-supports only touch at the a_n."""
    t_b, v_b = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(v, dtype=float))
    out = np.zeros(t_b.shape)
    for n in range(spec.n_max):
        out += np.asarray(example31_kernel(spec, n, t_b, v_b))
    return out


def example31_bracket(n: int, corrected_sign: bool = True) -> Fraction:
    """1 -/+ 2^(2n+3) int_{a_{n+1}}^1 (s - a_{n+1}) ds, in exact arithmetic."""
    a_next = 1 - Fraction(1, 2 ** (n + 1))
    integral = (1 - a_next) ** 2 / 2
    sign = 1 if corrected_sign else -1
    return 1 - sign * 2 ** (2 * n + 3) * integral


def breakpoints_in_s(kernel: MovingAverageKernel, times: Iterable[float]) -> np.ndarray:
    """Breakpoints of s -> f(s - t) - f(s) for every t in `times`."""
    base = kernel_breakpoints(kernel)
    shifted = [base + float(t) for t in times]
    return np.unique(np.concatenate([base] + shifted))
