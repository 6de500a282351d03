"""
Composite Gauss-Legendre rules on piecewise partitions.

All covariance integrals in this package have the form
    integral of k(t_i, s) k(t_j, s) ds
with integrands that are smooth between known breakpoints, may have an
integrable power singularity when s approaches a breakpoint from the left,
and decay polynomially in the deep past. The partition built here puts a
piece boundary on every breakpoint, grades pieces geometrically into the
singular points and lets pieces double in length in the deep past. Gauss
nodes are interior, so kernels are never evaluated at a singular point.
"""

import logging
import math
from functools import lru_cache
from typing import Iterable, Optional, Tuple

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_ORDER = 6
GRADING_RATIO = 0.5
GRADING_LEVELS = 60


@lru_cache(maxsize=16)
def gauss_rule(order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped to [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def _uniform_edges(a: float, b: float, max_step: float) -> np.ndarray:
    n = max(1, int(math.ceil((b - a) / max_step - 1e-9)))
    return np.linspace(a, b, n + 1)


def _doubling_edges(a: float, b: float) -> np.ndarray:
    # b < 0; pieces [2e, e] walking left until a
    edges = [b]
    e = b
    while e > a:
        e = max(a, 2.0 * e)
        edges.append(e)
    return np.array(edges[::-1])


def _graded_tail(c: float, b: float, ratio: float, levels: int) -> np.ndarray:
    width = b - c
    return np.concatenate([b - width * ratio ** np.arange(levels + 1), [b]])


def partition(lo: float, hi: float, breakpoints: Iterable[float], max_step: float,
              singular_points: Iterable[float] = (), deep_past: Optional[float] = None,
              ratio: float = GRADING_RATIO, levels: int = GRADING_LEVELS) -> np.ndarray:
    """
    Piece boundaries covering [lo, hi].

    Segments between consecutive breakpoints are cut into pieces of length at most
    `max_step`, except segments lying left of `deep_past` (a negative time), which are
    cut into pieces doubling in length. The piece ending at a point of
    `singular_points` is replaced by pieces graded geometrically into that point.
    """
    if hi <= lo:
        return np.array([lo, hi])
    cuts = {lo, hi}
    cuts.update(float(b) for b in breakpoints if lo < b < hi)
    if deep_past is not None and lo < deep_past < hi:
        cuts.add(deep_past)
    cuts = sorted(cuts)
    singular = {float(p) for p in singular_points}

    pieces = [np.array([lo])]
    for a, b in zip(cuts, cuts[1:]):
        if deep_past is not None and b <= deep_past < 0:
            edges = _doubling_edges(a, b)
        else:
            edges = _uniform_edges(a, b, max_step)
        if b in singular:
            edges = np.concatenate([edges[:-1], _graded_tail(edges[-2], b, ratio, levels)[1:]])
        pieces.append(edges[1:])
    edges = np.concatenate(pieces)
    # grading can produce coincident edges in extreme floating-point ranges
    keep = np.concatenate([[True], np.diff(edges) > 0])
    return edges[keep]


def composite_rule(edges: np.ndarray, order: int = DEFAULT_ORDER) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the order-`order` Gauss rule on every piece of `edges`."""
    x, w = gauss_rule(order)
    left = edges[:-1, None]
    width = np.diff(edges)[:, None]
    nodes = (left + width * x[None, :]).ravel()
    weights = (width * w[None, :]).ravel()
    return nodes, weights


def integrate(func, edges: np.ndarray, order: int = DEFAULT_ORDER) -> float:
    nodes, weights = composite_rule(edges, order)
    return float(np.dot(weights, func(nodes)))
