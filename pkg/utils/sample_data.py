from typing import Dict, List, Tuple

import numpy as np

from models.grid import Grid
from models.kernel import Example31Spec, MovingAverageKernel


def reference_kernels() -> Dict[str, MovingAverageKernel]:
    """Named kernels used by the demos, tests and performance checks."""
    return {
        'bm': MovingAverageKernel.fbm(0.5),
        'fbm025': MovingAverageKernel.fbm(0.25),
        'fbm075': MovingAverageKernel.fbm(0.75),
        'indicator1': MovingAverageKernel.indicator(1.0),
    }


def gapped_kernel(gap: float = 0.5, depth: float = 2.0, knots: int = 33) -> MovingAverageKernel:
    """Tabulated tent on [-depth, -gap], zero on [-gap, 0]: a kernel whose support edge is -gap."""
    xs = np.linspace(-depth, -gap, knots)
    mid = 0.5 * (xs[0] + xs[-1])
    vals = 1.0 - np.abs(xs - mid) / (mid - xs[0])
    return MovingAverageKernel.tabulated(list(xs) + [0.0], list(vals) + [0.0])


def oracle_grid() -> Grid:
    """Five points used for the simulation cross-checks."""
    return Grid.uniform(1.0, 4)


def example31_default() -> Example31Spec:
    return Example31Spec(n_max=12)


def bump(times: np.ndarray, start: float, stop: float) -> np.ndarray:
    """Nonnegative sine bump supported on [start, stop]."""
    inside = (times >= start) & (times <= stop)
    out = np.zeros_like(times, dtype=float)
    out[inside] = np.sin(np.pi * (times[inside] - start) / (stop - start)) + 1e-3
    return out


def random_bump_pairs(count: int, step: float, T: float = 1.0, seed: int = 0) -> List[Tuple[np.ndarray, np.ndarray, float, float]]:
    """
    (h on [-T, 0], g on [0, T], edge of h, edge of g) for `count` random bumps.

    Edges are whole multiples of `step` and both edges together stay below T / 2.
    """
    generator = np.random.default_rng(seed)
    n = int(round(T / step))
    times = step * np.arange(n + 1)
    pairs = []
    for _ in range(count):
        k_h, k_g = generator.integers(0, n // 4, size=2)
        len_h, len_g = generator.integers(n // 16, n // 4, size=2)
        edge_h, edge_g = k_h * step, k_g * step
        # h as a function of the distance to 0, stored on increasing time -T..0
        h = bump(times, edge_h, edge_h + len_h * step)[::-1].copy()
        g = bump(times, edge_g, edge_g + len_g * step)
        pairs.append((h, g, edge_h, edge_g))
    return pairs
