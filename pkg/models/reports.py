from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np


CONTINUITY_CAVEAT = (
    "The grid verdict concerns the finite-dimensional law on this grid only; "
    "it does not imply conditional full support in continuous time."
)


@dataclass(frozen=True, eq=False)
class DegenerateFunctional:
    label: str
    weights: np.ndarray
    variance: float


@dataclass(frozen=True)
class TubeEstimate:
    """Monte Carlo estimate of P(max_n |X_n - psi_n| < eps) with a Wilson interval."""

    eps: float
    estimate: float
    ci_low: float
    ci_high: float
    n_paths: int
    hits: int
    target_label: str = 'psi'


@dataclass(frozen=True, eq=False)
class CfsReport:
    """Grid-level conditional full support diagnostics for one Gram matrix."""

    cond_variances: np.ndarray
    min_cond_variance: float
    min_index: int
    grid_verdict: bool
    tolerance: float
    rank: int
    increment_rank: int
    smallest_eigenvalue: float
    degenerate_functionals: List[DegenerateFunctional] = field(default_factory=list)
    tube_estimates: List[TubeEstimate] = field(default_factory=list)

    @property
    def continuity_caveat(self) -> str:
        # Not a field: it cannot be switched off.
        return CONTINUITY_CAVEAT


@dataclass(frozen=True, eq=False)
class DeconvResult:
    """Solution g of h*g ~ phi on a uniform grid, with achieved errors."""

    g: np.ndarray
    approximation: np.ndarray
    sup_error: float
    l2_error: float
    lam: float
    edge_h: float
    step: float
    ladder: Tuple[Tuple[float, Optional[float]], ...] = ()


@dataclass(frozen=True)
class LadderStep:
    """One rung of a (step, lambda) refinement ladder."""

    step: float
    lam: float
    sup_error: float
    l2_error: float


@dataclass(frozen=True)
class CounterexampleRow:
    steps: int
    grid_verdict: Optional[bool]          # None where the verdict was not evaluated
    min_cond_variance: Optional[float]
    trapezoid_variance: float
    var_x1: float

    @property
    def ratio(self) -> float:
        return self.trapezoid_variance / self.var_x1 if self.var_x1 > 0 else float('nan')


@dataclass(frozen=True)
class CounterexampleSummary:
    """Grid verdicts against the variance of the time integral along a refinement ladder."""

    label: str
    rows: List[CounterexampleRow]
    brackets: List[Tuple[int, str]]       # exact bracket value per component, as a fraction string
    published_rows: List[CounterexampleRow] = field(default_factory=list)
