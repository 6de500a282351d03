from dataclasses import dataclass
from typing import Optional

import numpy as np

from models.grid import Grid


@dataclass(frozen=True, eq=False)
class GramMatrix:
    """
    Covariance of the process on a grid together with how it was computed.

    Negative eigenvalues within n * eps * scale of zero are rounding and stay in `sigma`
    untouched; anything further below zero (but above the PSD tolerance) is clamped to 0
    and `psd_repaired` is set.
    """

    grid: Grid
    sigma: np.ndarray
    quad_step: float
    L: float
    tail_error: float
    mode: str = 'full'                 # 'full' | 'fresh' | 'closed' | 'example31' | 'imported'
    convergence_tol: float = 0.0       # largest change seen under the last step halving
    min_eigenvalue: float = 0.0        # before clamping
    psd_repaired: bool = False
    normalization: float = 1.0         # factor the raw quadrature Gram was divided by
    label: Optional[str] = None

    def __post_init__(self):
        sigma = np.array(self.sigma, dtype=float)
        sigma.setflags(write=False)
        object.__setattr__(self, 'sigma', sigma)

    @property
    def size(self) -> int:
        return self.sigma.shape[0]

    @property
    def scale(self) -> float:
        """Largest diagonal entry, the reference for relative tolerances."""
        return float(np.max(np.diag(self.sigma))) if self.size else 0.0

    def metadata(self) -> dict:
        return {
            'grid': self.grid.to_dict(),
            'mode': self.mode,
            'quad_step': self.quad_step,
            'L': self.L,
            'tail_error': self.tail_error,
            'convergence_tol': self.convergence_tol,
            'min_eigenvalue': self.min_eigenvalue,
            'psd_repaired': self.psd_repaired,
            'normalization': self.normalization,
            'label': self.label,
        }
