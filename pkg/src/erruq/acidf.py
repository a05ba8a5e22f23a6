"""Adaptive rolling intervals: online coverage control with delayed
feedback, and the wrapper that drives QFCV as its interval constructor.

Intervals are issued on a grid of times spaced ``delta`` apart. The online
parameter theta moves by gamma * (1 - alpha - c) per issue, where c is the
newest computable coverage indicator; because an interval issued at time t
is only scoreable once z_{t..t+n_te-1} has arrived, the indicator consumed
before issue j is the one from k = ceil(n_te / delta) issues earlier. With
delta = 1 and the grid starting at t = 1 this is exactly the textbook
delayed-feedback update.

Two deterministic guarantees hold on every run and are checked at runtime:
theta stays inside [m - n_te*gamma, M + n_te*gamma], and the average
coverage deficit obeys |(1/J) sum (1 - alpha - c_j)| <= (M - m +
3*n_te*gamma) / (J*gamma), where (m, M) are the constructor's saturation
bounds and J the number of issued intervals.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Protocol, runtime_checkable

import numpy as np

from .core import IntervalRecord, LossFn, TimeSeries
from .forecasters import predict_batch
from .qfcv import ErrPairs, _aggregate_aux, qfcv_interval

__all__ = [
    "AciState",
    "aci_step",
    "PiConstructor",
    "RollingRun",
    "run_acidf",
    "AqfcvConstructor",
    "RollingConfig",
    "make_rolling_err",
    "run_aqfcv",
    "time_avg_coverage",
    "instance_avg_coverage",
]


@dataclass(frozen=True)
class AciState:
    """Online state of the delayed-feedback update."""

    alpha: float
    gamma: float
    delta: int
    n_te: int
    theta: float = 0.0
    k: int = field(init=False)

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.delta < 1 or self.n_te < 1:
            raise ValueError("delta and n_te must be >= 1")
        # smallest s with s*delta >= n_te
        object.__setattr__(self, "k", math.ceil(self.n_te / self.delta))

    def update(self, c: float) -> "AciState":
        """theta <- theta + gamma * (1 - alpha - c)."""
        return replace(self, theta=self.theta + self.gamma * (1.0 - self.alpha - c))

    def carry(self) -> "AciState":
        return self


def aci_step(state: AciState, t: int, c: float | None = None) -> AciState:
    """One tick of the update cadence: theta changes only when t is a
    multiple of delta past the warm-up k*delta and an indicator is ready."""
    if t < 1:
        raise ValueError("time indices start at 1")
    if t % state.delta == 0 and t > state.k * state.delta:
        if c is None:
            raise ValueError(f"update step t={t} requires a coverage indicator")
        return state.update(c)
    return state.carry()


@runtime_checkable
class PiConstructor(Protocol):
    """Interval-constructing function with saturation bounds: theta above
    theta_full_line must yield the full line, theta below theta_empty the
    empty set."""

    theta_full_line: float
    theta_empty: float

    def build(self, t: int, theta: float) -> IntervalRecord: ...


@dataclass(frozen=True)
class RollingRun:
    """Issued intervals with realized errors, indicators, and the theta path."""

    t: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    theta: np.ndarray
    err_sto: np.ndarray
    covered: np.ndarray
    alpha: float
    gamma: float
    delta: int
    n_te: int
    k: int
    bound_lo: float  # m
    bound_hi: float  # M

    def __len__(self) -> int:
        return self.t.shape[0]

    def time_avg_coverage(self) -> float:
        return float(np.mean(self.covered))

    def coverage_deficit(self) -> float:
        return float(abs(np.mean(1.0 - self.alpha - self.covered)))

    def deficit_bound(self) -> float:
        if self.gamma == 0:
            return math.inf
        return (self.bound_hi - self.bound_lo + 3.0 * self.n_te * self.gamma) / (
            len(self) * self.gamma
        )


def run_acidf(
    constructor: PiConstructor,
    err_sto: Callable[[int], float] | np.ndarray,
    *,
    alpha: float,
    gamma: float,
    delta: int,
    n_te: int,
    first_issue: int,
    t_max: int,
) -> RollingRun:
    """Drive the delayed-feedback recursion over the issue grid
    {first_issue, first_issue + delta, ...} while test windows fit in t_max.

    ``err_sto`` supplies the realized error of the interval issued at time t
    (callable on t, or an array aligned with the issue grid).
    """
    state = AciState(alpha=alpha, gamma=gamma, delta=delta, n_te=n_te)
    k = state.k
    m_b, hi_b = constructor.theta_empty, constructor.theta_full_line
    if not (m_b - n_te * gamma <= 0.0 <= hi_b + n_te * gamma):
        raise ValueError(
            "theta starts at 0 outside the guaranteed band "
            f"[{m_b - n_te * gamma}, {hi_b + n_te * gamma}]; the boundedness "
            "guarantee cannot hold for these saturation bounds"
        )
    if first_issue < 1:
        raise ValueError("first_issue must be >= 1")
    times = np.arange(first_issue, t_max - n_te + 2, delta, dtype=int)
    j_total = times.shape[0]
    if j_total < k + 1:
        raise ValueError(
            f"run too short: {j_total} issues but the first update needs {k + 1} "
            f"(t_max >= first_issue + k*delta + n_te - 1)"
        )
    theta_floor = m_b - n_te * gamma
    theta_ceil = hi_b + n_te * gamma

    lo = np.empty(j_total)
    hi = np.empty(j_total)
    thetas = np.empty(j_total)
    errs = np.empty(j_total)
    covered = np.empty(j_total)
    for j in range(j_total):
        if j >= k:
            state = state.update(covered[j - k])
        else:
            state = state.carry()
        theta = state.theta
        if not theta_floor <= theta <= theta_ceil:
            raise RuntimeError(
                f"theta={theta} escaped [{theta_floor}, {theta_ceil}] at issue {j + 1}"
            )
        t = int(times[j])
        try:
            rec = constructor.build(t, theta)
            e = float(err_sto(t)) if callable(err_sto) else float(err_sto[j])
        except Exception as exc:
            raise RuntimeError(f"rolling run aborted at issue {j + 1} (t={t}): {exc}") from exc
        if theta > hi_b and not (rec.lo == -math.inf and rec.hi == math.inf):
            raise RuntimeError(f"constructor violated the full-line contract at theta={theta}")
        if theta < m_b and not rec.lo > rec.hi:
            raise RuntimeError(f"constructor violated the empty-set contract at theta={theta}")
        lo[j], hi[j], thetas[j] = rec.lo, rec.hi, theta
        errs[j] = e
        covered[j] = 1.0 if lo[j] <= e <= hi[j] else 0.0

    run = RollingRun(
        t=times,
        lo=lo,
        hi=hi,
        theta=thetas,
        err_sto=errs,
        covered=covered,
        alpha=alpha,
        gamma=gamma,
        delta=delta,
        n_te=n_te,
        k=k,
        bound_lo=m_b,
        bound_hi=hi_b,
    )
    if run.coverage_deficit() > run.deficit_bound():
        raise RuntimeError(
            f"coverage deficit {run.coverage_deficit():.6f} exceeded the deterministic "
            f"bound {run.deficit_bound():.6f}"
        )
    return run


def time_avg_coverage(run: RollingRun) -> float:
    """Fraction of covered intervals along one realized trajectory."""
    return run.time_avg_coverage()


def instance_avg_coverage(runs: list[RollingRun]) -> np.ndarray:
    """Column means of the coverage matrix: per issue time, the fraction of
    independent instances covered."""
    if not runs:
        raise ValueError("need at least one run")
    t0 = runs[0].t
    for r in runs[1:]:
        if not np.array_equal(r.t, t0):
            raise ValueError("runs have mismatched issue grids")
    return np.mean([r.covered for r in runs], axis=0)


# ---------------------------------------------------------------------------
# AQFCV: QFCV as the interval constructor
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RollingConfig:
    alpha: float = 0.1
    gamma: float = 0.01
    delta: int = 5
    n_tr: int = 40
    n_val: int = 5
    n_te: int = 5
    qfcv_delta: int = 1
    aux_m: int = 1
    min_folds: int = 20
    first_issue: int | None = None
    t_max: int | None = None

    def resolved_first_issue(self) -> int:
        if self.first_issue is not None:
            return self.first_issue
        span = self.n_tr + self.n_val + self.n_te
        return span + (self.min_folds - 1) * self.qfcv_delta + 1


class AqfcvConstructor:
    """QFCV on the data prefix z_{1:t-1} at effective miscoverage
    clamp(alpha - theta, 0, 1).

    alpha_eff <= 0 yields the full line (so M = alpha) and alpha_eff >= 1
    the empty set (so m = alpha - 1). Fold tuples are cached incrementally:
    fold windows are anchored in absolute time, so a growing prefix only adds
    new folds and refreshes the star feature.
    """

    def __init__(
        self,
        series: TimeSeries,
        forecaster,
        loss: LossFn,
        *,
        alpha: float,
        n_tr: int,
        n_val: int,
        n_te: int,
        qfcv_delta: int = 1,
        aux_m: int = 1,
        min_folds: int = 20,
    ):
        if not 0 < alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
        if aux_m > n_val:
            raise ValueError(f"aux_m={aux_m} exceeds n_val={n_val}")
        self.series = series
        self.forecaster = forecaster
        self.loss = loss
        self.alpha = alpha
        self.n_tr = n_tr
        self.n_val = n_val
        self.n_te = n_te
        self.qfcv_delta = qfcv_delta
        self.aux_m = aux_m
        self.min_folds = max(min_folds, aux_m + 2)
        self.theta_full_line = alpha
        self.theta_empty = alpha - 1.0
        span = n_tr + n_val + n_te
        k_cap = max(0, (series.n - span) // qfcv_delta + 1)
        self._err_val = np.empty((k_cap, max(aux_m, 1)))
        self._err_test = np.empty(k_cap)
        self._n_folds = 0
        self._warned = False

    def _k_avail(self, n_q: int) -> int:
        span = self.n_tr + self.n_val + self.n_te
        if n_q < span:
            return 0
        return (n_q - span) // self.qfcv_delta + 1

    def _ensure_folds(self, k: int) -> None:
        if k <= self._n_folds:
            return
        idx = np.arange(self._n_folds, k)
        starts = idx * self.qfcv_delta  # 0-based start of D_i
        x, y = self.series.x, self.series.y
        xd = np.stack([x[s : s + self.n_tr] for s in starts])
        yd = np.stack([y[s : s + self.n_tr] for s in starts])
        vs = starts + self.n_tr
        xv = np.stack([x[s : s + self.n_val] for s in vs])
        yv = np.stack([y[s : s + self.n_val] for s in vs])
        ss = starts + self.n_val
        xds = np.stack([x[s : s + self.n_tr] for s in ss])
        yds = np.stack([y[s : s + self.n_tr] for s in ss])
        ts = starts + self.n_tr + self.n_val
        xt = np.stack([x[s : s + self.n_te] for s in ts])
        yt = np.stack([y[s : s + self.n_te] for s in ts])
        if hasattr(self.forecaster, "fit_batch"):
            w, b = self.forecaster.fit_batch(xd, yd)
            val_loss = np.asarray(self.loss(predict_batch(w, b, xv), yv), dtype=float)
            ws, bs = self.forecaster.fit_batch(xds, yds)
            test = np.asarray(self.loss(predict_batch(ws, bs, xt), yt), dtype=float).mean(axis=1)
        else:
            val_loss = np.empty((idx.shape[0], self.n_val))
            test = np.empty(idx.shape[0])
            for row in range(idx.shape[0]):
                model = self.forecaster.fit(xd[row], yd[row])
                val_loss[row] = self.loss(model.predict(xv[row]), yv[row])
                model_star = self.forecaster.fit(xds[row], yds[row])
                test[row] = np.mean(self.loss(model_star.predict(xt[row]), yt[row]))
        self._err_val[idx] = _aggregate_aux(val_loss, self.aux_m)
        self._err_test[idx] = test
        self._n_folds = k

    def _star_feature(self, n_q: int) -> np.ndarray:
        x, y = self.series.x, self.series.y
        d0 = n_q - self.n_tr - self.n_val  # 0-based start of D
        model = self.forecaster.fit(x[d0 : d0 + self.n_tr], y[d0 : d0 + self.n_tr])
        v0 = n_q - self.n_val
        per_index = np.asarray(
            self.loss(model.predict(x[v0:n_q]), y[v0:n_q]), dtype=float
        )
        return _aggregate_aux(per_index, self.aux_m)

    def _saturated(self, t: int, alpha_eff: float, full: bool) -> IntervalRecord:
        level = max(0.0, min(1.0, alpha_eff))
        if full:
            return IntervalRecord(-math.inf, math.inf, "aqfcv", level, t)
        return IntervalRecord(math.inf, -math.inf, "aqfcv", level, t)

    def build(self, t: int, theta: float) -> IntervalRecord:
        alpha_eff = self.alpha - theta
        # below ~4 ulp the quantile levels alpha_eff/2 and 1 - alpha_eff/2
        # degenerate to 0.0/1.0 in floating point; that is the saturated regime
        tiny = 4.0 * np.finfo(float).eps
        if alpha_eff <= tiny:
            return self._saturated(t, alpha_eff, full=True)
        if alpha_eff >= 1.0 - tiny:
            return self._saturated(t, alpha_eff, full=False)
        n_q = t - 1
        if n_q > self.series.n:
            raise ValueError(f"issue time {t} beyond the stored series")
        k = self._k_avail(n_q)
        if k < self.min_folds:
            if not self._warned:
                warnings.warn(
                    f"insufficient history for QFCV at t={t} (K={k} < {self.min_folds}); "
                    "emitting the full line",
                    RuntimeWarning,
                    stacklevel=2,
                )
                self._warned = True
            return self._saturated(t, alpha_eff, full=True)
        self._ensure_folds(k)
        pairs = ErrPairs(self._err_val[:k], self._err_test[:k], self.aux_m)
        star = self._star_feature(n_q)
        # no search hints here: build(t, theta) must be a pure function of
        # its arguments so a stored run can be replayed bit-exactly
        out = qfcv_interval(
            pairs,
            star,
            alpha_eff,
            1,
            clamp_nonnegative=self.loss.nonnegative,
            t=t,
            method="aqfcv",
        )
        return out.interval


def make_rolling_err(
    series: TimeSeries, forecaster, loss: LossFn, n_tr: int, n_te: int
) -> Callable[[int], float]:
    """Realized rolling error at issue time t: model fit on z_{t-n_tr..t-1},
    averaged loss over z_{t..t+n_te-1}."""

    def err_at(t: int) -> float:
        if t - n_tr < 1 or t + n_te - 1 > series.n:
            raise ValueError(f"issue time {t} needs data outside 1..{series.n}")
        x, y = series.x, series.y
        model = forecaster.fit(x[t - n_tr - 1 : t - 1], y[t - n_tr - 1 : t - 1])
        pred = model.predict(x[t - 1 : t - 1 + n_te])
        return float(np.mean(loss(pred, y[t - 1 : t - 1 + n_te])))

    return err_at


def run_aqfcv(
    series: TimeSeries, forecaster, loss: LossFn, config: RollingConfig
) -> RollingRun:
    """AQFCV end to end: QFCV constructor + delayed-feedback recursion.

    ``gamma = 0`` degenerates to plain rolling QFCV at fixed level alpha.
    """
    constructor = AqfcvConstructor(
        series,
        forecaster,
        loss,
        alpha=config.alpha,
        n_tr=config.n_tr,
        n_val=config.n_val,
        n_te=config.n_te,
        qfcv_delta=config.qfcv_delta,
        aux_m=config.aux_m,
        min_folds=config.min_folds,
    )
    err = make_rolling_err(series, forecaster, loss, config.n_tr, config.n_te)
    return run_acidf(
        constructor,
        err,
        alpha=config.alpha,
        gamma=config.gamma,
        delta=config.delta,
        n_te=config.n_te,
        first_issue=config.resolved_first_issue(),
        t_max=config.t_max if config.t_max is not None else series.n,
    )
