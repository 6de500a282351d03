from dataclasses import dataclass
from typing import Sequence

import numpy as np

from models.errors import ValidationError


@dataclass(frozen=True, eq=False)
class Grid:
    """Strictly increasing observation times t_0 < ... < t_N with t_0 >= 0."""

    times: np.ndarray

    def __post_init__(self):
        times = np.array(self.times, dtype=float).ravel()
        if times.size == 0:
            raise ValidationError("grid must be nonempty", field='grid.times')
        if not np.all(np.isfinite(times)):
            raise ValidationError("grid times must be finite", field='grid.times')
        if times[0] < 0:
            raise ValidationError("grid times must be nonnegative", field='grid.times')
        if np.any(np.diff(times) <= 0):
            raise ValidationError("grid times must be strictly increasing", field='grid.times')
        times.setflags(write=False)
        object.__setattr__(self, 'times', times)

    @classmethod
    def uniform(cls, T: float, n_steps: int, start: float = 0.0) -> 'Grid':
        if n_steps < 1 or not (T > start):
            raise ValidationError("uniform grid needs n_steps >= 1 and T > start", field='grid')
        return cls(np.linspace(start, T, n_steps + 1))

    @classmethod
    def explicit(cls, times: Sequence[float]) -> 'Grid':
        return cls(np.asarray(times, dtype=float))

    def __len__(self) -> int:
        return self.times.size

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def min_spacing(self) -> float:
        if self.times.size < 2:
            return self.T if self.T > 0 else 1.0
        return float(np.min(np.diff(self.times)))

    def is_uniform(self, rtol: float = 1e-9) -> bool:
        if self.times.size < 3:
            return True
        steps = np.diff(self.times)
        return bool(np.all(np.abs(steps - steps[0]) <= rtol * steps[0]))

    def to_dict(self) -> dict:
        return {'times': [float(t) for t in self.times]}
