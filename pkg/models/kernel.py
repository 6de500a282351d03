import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

from models.errors import ValidationError


FAMILIES = ('fbm', 'indicator', 'tabulated')

# Depth at which the fbm tail bound per unit t^2 reaches this level
FBM_TAIL_TARGET = 1e-12
MAX_TRUNCATION_DEPTH = 1e200


@dataclass(frozen=True)
class MovingAverageKernel:
    """The function f of a Brownian moving average, f = 0 on the nonnegative half-line."""

    family: str
    hurst: Optional[float] = None          # fbm(H)
    width: Optional[float] = None          # indicator(c): f = 1 on [-c, 0)
    xs: Tuple[float, ...] = ()             # tabulated knots, strictly increasing, <= 0
    vals: Tuple[float, ...] = ()
    scale: float = 1.0
    truncation_hint: Optional[float] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown kernel family {self.family!r}", field='family')
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise ValidationError("scale must be a positive real", field='scale')

        if self.family == 'fbm':
            if self.hurst is None or not (0.0 < self.hurst < 1.0):
                raise ValidationError(f"Hurst index must lie in (0, 1), got {self.hurst}", field='hurst')
        elif self.family == 'indicator':
            if self.width is None or not (math.isfinite(self.width) and self.width > 0):
                raise ValidationError("indicator width c must be a positive real", field='width')
        else:
            self._check_tabulation()

        if self.truncation_hint is None:
            object.__setattr__(self, 'truncation_hint', self._default_truncation_hint())
        elif not (self.truncation_hint > 0):
            raise ValidationError("truncation_hint must be positive", field='truncation_hint')

    def _check_tabulation(self):
        xs, vals = self.xs, self.vals
        if len(xs) < 2 or len(xs) != len(vals):
            raise ValidationError("tabulated kernel needs at least two (x, f(x)) pairs", field='xs')
        if not all(math.isfinite(x) for x in xs) or not all(math.isfinite(v) for v in vals):
            raise ValidationError("tabulated values must be finite", field='vals')
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValidationError("tabulated xs must be strictly increasing", field='xs')
        if xs[-1] > 0:
            raise ValidationError("tabulated xs must all be <= 0", field='xs')
        if not any(abs(v) > 0 for v in vals):
            raise ValidationError("kernel is zero everywhere (needs f != 0 on a set of positive measure)",
                                  field='vals')

    def _default_truncation_hint(self) -> float:
        if self.family == 'indicator':
            return self.width
        if self.family == 'tabulated':
            return -self.xs[0]
        alpha = self.hurst - 0.5
        if alpha == 0.0:
            return 1.0
        # alpha^2 L^(2H-2) / (2-2H) <= target
        exponent = 1.0 / (2.0 * self.hurst - 2.0)
        base = FBM_TAIL_TARGET * (2.0 - 2.0 * self.hurst) / (alpha * alpha)
        log_depth = exponent * math.log(base)
        return max(1.0, math.exp(min(log_depth, math.log(MAX_TRUNCATION_DEPTH))))

    @classmethod
    def fbm(cls, hurst: float, scale: float = 1.0) -> 'MovingAverageKernel':
        return cls(family='fbm', hurst=hurst, scale=scale)

    @classmethod
    def indicator(cls, width: float, scale: float = 1.0) -> 'MovingAverageKernel':
        return cls(family='indicator', width=width, scale=scale)

    @classmethod
    def tabulated(cls, xs, vals, scale: float = 1.0) -> 'MovingAverageKernel':
        return cls(family='tabulated', xs=tuple(float(x) for x in xs),
                   vals=tuple(float(v) for v in vals), scale=scale)

    @property
    def label(self) -> str:
        if self.family == 'fbm':
            return f"fbm(H={self.hurst:g})"
        if self.family == 'indicator':
            return f"indicator(c={self.width:g})"
        return f"tabulated({len(self.xs)} knots)"

    @property
    def support_depth(self) -> float:
        """Length of the support of f on the negative half-line (inf for fbm)."""
        if self.family == 'fbm':
            return math.inf
        if self.family == 'indicator':
            return self.width
        return -self.xs[0]

    @property
    def semimartingale(self) -> Optional[bool]:
        """Metadata flag; None where the sufficient criterion is silent."""
        if self.family == 'fbm':
            return self.hurst == 0.5
        if self.family == 'tabulated' and self.vals[0] == 0.0 and self.vals[-1] == 0.0:
            # absolutely continuous with bounded derivative
            return True
        return None


@dataclass(frozen=True)
class TwoSidedKernel:
    """Split of X_t into the fresh integral over [0, t] and the history integral over [-L, 0]."""

    fresh: Callable
    history: Callable
    L: float
    tail_error_bound: float


@dataclass(frozen=True)
class Example31Spec:
    """Parameters of the sum X = sum_n X^n built on dyadic blocks [a_n, a_{n+1}] of [0, 1]."""

    n_max: int = 12
    b_first: float = 1.0
    b_ratio: float = 0.5
    b_values: Tuple[float, ...] = field(default=())
    corrected_sign: bool = True

    def __post_init__(self):
        if not (isinstance(self.n_max, int) and self.n_max >= 1):
            raise ValidationError("n_max must be a positive integer", field='n_max')
        if self.b_values:
            if len(self.b_values) < self.n_max or any(not (b > 0) for b in self.b_values):
                raise ValidationError("b_values must provide n_max positive entries", field='b_values')
        else:
            if not (self.b_first > 0):
                raise ValidationError("b_first must be positive", field='b_first')
            if not (0 < self.b_ratio < 1):
                raise ValidationError("b_ratio must lie in (0, 1) so that b_n decreases to 0",
                                      field='b_ratio')

    def a(self, n: int) -> float:
        return 1.0 - 2.0 ** (-n)

    def b(self, n: int) -> float:
        if self.b_values:
            return float(self.b_values[n])
        return self.b_first * self.b_ratio ** n

    @property
    def sign(self) -> float:
        """+1 subtracts the drift term (vanishing time integral), -1 is the published '+'."""
        return 1.0 if self.corrected_sign else -1.0

    @property
    def breakpoints(self) -> Tuple[float, ...]:
        return tuple(self.a(n) for n in range(self.n_max + 1))
