"""Domain types: time series, loss functions, and fold/window layouts.

All time indices are 1-based, matching the windowing formulas; conversion to
0-based array positions happens only inside :class:`TimeSeries`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

__all__ = [
    "WindowScheme",
    "TimePoint",
    "TimeSeries",
    "LossFn",
    "SQUARED",
    "ABSOLUTE",
    "FoldLayout",
    "IntervalRecord",
    "build_fold_layout",
    "stochastic_test_error",
]


class WindowScheme(str, Enum):
    ROLLING = "rolling"
    EXPANDING = "expanding"


@dataclass(frozen=True)
class TimePoint:
    """One observation z_t = (x_t, y_t)."""

    x: np.ndarray
    y: float

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        if x.ndim != 1 or not np.all(np.isfinite(x)) or not np.isfinite(self.y):
            raise ValueError("time point must hold a finite feature vector and outcome")
        object.__setattr__(self, "x", x)

    @property
    def p(self) -> int:
        return self.x.shape[0]


@dataclass(frozen=True)
class TimeSeries:
    """Ordered (feature, outcome) pairs.

    ``x`` has shape ``(n, p)`` and ``y`` shape ``(n,)``; row ``t - 1`` holds
    the observation at time ``t``.
    """

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 2:
            raise ValueError(f"x must be 2-d (n, p), got shape {x.shape}")
        if y.ndim != 1:
            raise ValueError(f"y must be 1-d (n,), got shape {y.shape}")
        if x.shape[0] != y.shape[0]:
            raise ValueError(f"x has {x.shape[0]} rows but y has {y.shape[0]}")
        if x.shape[0] < 1:
            raise ValueError("series must contain at least one point")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("series contains non-finite values")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def window(self, start: int, stop: int) -> tuple[np.ndarray, np.ndarray]:
        """Rows for 1-based time indices ``start..stop`` inclusive."""
        if start < 1 or stop > self.n or start > stop:
            raise ValueError(f"window [{start}, {stop}] outside series of length {self.n}")
        return self.x[start - 1 : stop], self.y[start - 1 : stop]

    def head(self, n: int) -> "TimeSeries":
        """Prefix z_{1:n} as a new series."""
        if not 1 <= n <= self.n:
            raise ValueError(f"prefix length {n} outside [1, {self.n}]")
        return TimeSeries(self.x[:n], self.y[:n])

    def point(self, t: int) -> TimePoint:
        """The observation at (1-based) time t."""
        if not 1 <= t <= self.n:
            raise ValueError(f"time {t} outside 1..{self.n}")
        return TimePoint(self.x[t - 1], float(self.y[t - 1]))

    @classmethod
    def from_points(cls, points) -> "TimeSeries":
        points = list(points)
        if not points:
            raise ValueError("series must contain at least one point")
        dims = {pt.p for pt in points}
        if len(dims) != 1:
            raise ValueError(f"points have mixed feature dimensions {sorted(dims)}")
        return cls(np.stack([pt.x for pt in points]), np.array([pt.y for pt in points]))


@dataclass(frozen=True)
class LossFn:
    """Pointwise loss l(yhat, y) >= 0, vectorized over arrays.

    ``nonnegative`` lets interval constructors clamp lower endpoints at zero.
    """

    kind: str
    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    nonnegative: bool = True

    def __call__(self, yhat, y):
        out = np.asarray(self.fn(np.asarray(yhat, dtype=float), np.asarray(y, dtype=float)))
        if not np.all(np.isfinite(out)):
            raise FloatingPointError(f"{self.kind} loss produced non-finite values")
        return out


SQUARED = LossFn("squared", lambda yhat, y: (yhat - y) ** 2)
ABSOLUTE = LossFn("absolute", lambda yhat, y: np.abs(yhat - y))

_LOSSES = {"squared": SQUARED, "absolute": ABSOLUTE}


def get_loss(kind: str) -> LossFn:
    try:
        return _LOSSES[kind]
    except KeyError:
        raise ValueError(f"unknown loss kind {kind!r}; choose from {sorted(_LOSSES)}") from None


@dataclass(frozen=True)
class IntervalRecord:
    """One interval produced by any method.

    An empty interval is represented as ``(lo, hi) = (+inf, -inf)`` so that
    ``contains`` naturally rejects everything; the full line is
    ``(-inf, +inf)``. Proper intervals always satisfy ``lo <= hi``.
    """

    lo: float
    hi: float
    method: str
    alpha: float
    t: int

    def contains(self, value: float) -> bool:
        return bool(self.lo <= value <= self.hi)

    @property
    def length(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class FoldLayout:
    """Index sets D_i, V_i, D_i*, T_i for folds i = 1..K plus the star sets.

    Rolling scheme, fold i (1-based indices, s = (i-1)*delta):
        D_i  = {s+1, ..., s+n_tr}
        V_i  = {s+n_tr+1, ..., s+n_tr+n_val}
        D_i* = {s+n_val+1, ..., s+n_tr+n_val}      (ends with V_i)
        T_i  = {s+n_tr+n_val+1, ..., s+n_tr+n_val+n_te}
    T_i starts one past the end of V_i, mirroring the star layout where
    T = {n+1, ..., n+n_te} starts strictly after V.

    Expanding scheme: D_i = {1, ..., s+n_tr} and D_i* = D_i u V_i; V_i and
    T_i as above. Star sets are D = {1, ..., n-n_val}, D* = {1, ..., n}.
    """

    n: int
    n_tr: int
    n_val: int
    n_te: int
    delta: int
    scheme: WindowScheme
    K: int = field(init=False)

    def __post_init__(self):
        for name in ("n", "n_tr", "n_val", "n_te", "delta"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool):
                raise ValueError(f"{name} must be an integer, got {v!r}")
            if v < 1:
                raise ValueError(f"{name} must be >= 1, got {v}")
        if self.n < self.n_tr + self.n_val + self.n_te:
            raise ValueError(
                f"series length n={self.n} is shorter than "
                f"n_tr + n_val + n_te = {self.n_tr + self.n_val + self.n_te}"
            )
        object.__setattr__(
            self, "K", (self.n - self.n_tr - self.n_val - self.n_te) // self.delta + 1
        )

    def _check_fold(self, i: int) -> int:
        if not 1 <= i <= self.K:
            raise ValueError(f"fold index {i} outside 1..{self.K}")
        return (i - 1) * self.delta

    def d(self, i: int) -> np.ndarray:
        s = self._check_fold(i)
        if self.scheme is WindowScheme.EXPANDING:
            return np.arange(1, s + self.n_tr + 1)
        return np.arange(s + 1, s + self.n_tr + 1)

    def v(self, i: int) -> np.ndarray:
        s = self._check_fold(i)
        return np.arange(s + self.n_tr + 1, s + self.n_tr + self.n_val + 1)

    def d_star(self, i: int) -> np.ndarray:
        s = self._check_fold(i)
        if self.scheme is WindowScheme.EXPANDING:
            return np.arange(1, s + self.n_tr + self.n_val + 1)
        return np.arange(s + self.n_val + 1, s + self.n_tr + self.n_val + 1)

    def t(self, i: int) -> np.ndarray:
        s = self._check_fold(i)
        lo = s + self.n_tr + self.n_val + 1
        return np.arange(lo, lo + self.n_te)

    @property
    def star_d(self) -> np.ndarray:
        if self.scheme is WindowScheme.EXPANDING:
            return np.arange(1, self.n - self.n_val + 1)
        return np.arange(self.n - self.n_tr - self.n_val + 1, self.n - self.n_val + 1)

    @property
    def star_v(self) -> np.ndarray:
        return np.arange(self.n - self.n_val + 1, self.n + 1)

    @property
    def star_d_star(self) -> np.ndarray:
        if self.scheme is WindowScheme.EXPANDING:
            return np.arange(1, self.n + 1)
        return np.arange(self.n - self.n_tr + 1, self.n + 1)

    @property
    def star_t(self) -> np.ndarray:
        return np.arange(self.n + 1, self.n + self.n_te + 1)


def build_fold_layout(
    n: int,
    n_tr: int,
    n_val: int,
    n_te: int,
    delta: int = 1,
    scheme: WindowScheme | str = WindowScheme.ROLLING,
) -> FoldLayout:
    """Construct the fold layout; K = floor((n - n_tr - n_val - n_te) / delta) + 1."""
    return FoldLayout(
        n=int(n),
        n_tr=int(n_tr),
        n_val=int(n_val),
        n_te=int(n_te),
        delta=int(delta),
        scheme=WindowScheme(scheme),
    )


def stochastic_test_error(series: TimeSeries, model, layout: FoldLayout, loss: LossFn) -> float:
    """Average loss of a fitted model over the star test window T = {n+1..n+n_te}.

    ``series`` must extend through n + n_te; ``model`` must have been fit on
    the star training window D*.
    """
    t_idx = layout.star_t
    if series.n < t_idx[-1]:
        raise ValueError(
            f"series of length {series.n} is missing future indices up to {t_idx[-1]}"
        )
    x_te, y_te = series.window(int(t_idx[0]), int(t_idx[-1]))
    return float(np.mean(loss(model.predict(x_te), y_te)))
