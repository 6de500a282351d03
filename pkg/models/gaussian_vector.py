from dataclasses import dataclass
from typing import Optional

import numpy as np

from models.errors import ValidationError
from models.grid import Grid
from models.gram import GramMatrix


@dataclass(frozen=True, eq=False)
class GaussianVector:
    """Finite-dimensional Gaussian marginal: mean vector plus Gram matrix."""

    mean: np.ndarray
    gram: GramMatrix

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).ravel()
        if mean.size != self.gram.size:
            raise ValidationError(
                f"mean has {mean.size} entries but the Gram matrix is {self.gram.size}x{self.gram.size}",
                field='mean')
        mean.setflags(write=False)
        object.__setattr__(self, 'mean', mean)

    @classmethod
    def centered(cls, gram: GramMatrix) -> 'GaussianVector':
        return cls(np.zeros(gram.size), gram)

    @property
    def cov(self) -> np.ndarray:
        return self.gram.sigma

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True, eq=False)
class PsdFactor:
    """Pivoted factor with factor @ factor.T reproducing the covariance."""

    factor: np.ndarray        # n x rank, lower triangular after applying `pivots`
    rank: int
    pivots: np.ndarray        # order in which coordinates were eliminated
    pivot_values: np.ndarray  # residual variances at each accepted pivot


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """Seeded paths on a grid, one row per path."""

    grid: Grid
    paths: np.ndarray
    seed: int
    method: str                      # 'cholesky' | 'direct'
    substeps: Optional[int] = None
    L: Optional[float] = None

    def __post_init__(self):
        paths = np.asarray(self.paths, dtype=float)
        if paths.ndim != 2 or paths.shape[1] != len(self.grid):
            raise ValidationError("paths must be an M x (N+1) matrix matching the grid", field='paths')
        if not np.all(np.isfinite(paths)):
            raise ValidationError("paths contain non-finite entries", field='paths')

    @property
    def n_paths(self) -> int:
        return self.paths.shape[0]

    def metadata(self) -> dict:
        return {
            'grid': self.grid.to_dict(),
            'seed': self.seed,
            'method': self.method,
            'substeps': self.substeps,
            'L': self.L,
            'n_paths': self.n_paths,
        }
