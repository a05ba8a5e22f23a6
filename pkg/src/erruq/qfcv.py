"""Quantile-based forward cross-validation: auxiliary features, per-fold
error tuples, the quantile-regression prediction interval, and the
least-squares point estimator.

The method regresses fold test errors on fold auxiliary features at the
alpha/2 and 1 - alpha/2 pinball levels and evaluates both fits at the newest
window's features. With the trivial auxiliary function (m = 0) it reduces to
empirical quantiles of the fold test errors, exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import FoldLayout, IntervalRecord, LossFn, TimeSeries, WindowScheme, build_fold_layout
from .forecasters import predict_batch
from .quantreg import LinearQuantileModel, empirical_quantile, fit_linear_quantile

__all__ = [
    "AuxSpec",
    "ErrPair",
    "ErrPairs",
    "QfcvConfig",
    "QfcvOutput",
    "aux_block_slices",
    "aux_features",
    "fold_losses",
    "compute_err_pairs",
    "qfcv_interval",
    "qfcv_point",
    "run_qfcv",
    "star_test_error",
]


@dataclass(frozen=True)
class AuxSpec:
    """Dimension of the auxiliary feature map; m = 0 is the constant feature,
    m >= 1 averages the validation losses over m contiguous blocks."""

    m: int = 1

    def __post_init__(self):
        if self.m < 0:
            raise ValueError(f"aux dimension m must be >= 0, got {self.m}")


@dataclass(frozen=True)
class ErrPair:
    err_val: np.ndarray
    err_test: float


@dataclass(frozen=True)
class ErrPairs:
    """The K fold tuples (err_val in R^m, err_test in R), stored columnar.

    For m = 0 the stored feature is the constant 1 and the quantile stage is
    intercept-only.
    """

    err_val: np.ndarray  # (K, max(m, 1))
    err_test: np.ndarray  # (K,)
    m: int

    def __post_init__(self):
        ev = np.atleast_2d(np.asarray(self.err_val, dtype=float))
        et = np.asarray(self.err_test, dtype=float).ravel()
        if ev.shape[0] != et.shape[0]:
            raise ValueError("err_val and err_test have different fold counts")
        if not (np.all(np.isfinite(ev)) and np.all(np.isfinite(et))):
            raise ValueError("error pairs contain non-finite values")
        object.__setattr__(self, "err_val", ev)
        object.__setattr__(self, "err_test", et)

    def __len__(self) -> int:
        return self.err_test.shape[0]

    def __getitem__(self, i: int) -> ErrPair:
        return ErrPair(self.err_val[i], float(self.err_test[i]))


@dataclass(frozen=True)
class QfcvConfig:
    alpha: float
    n_tr: int
    n_val: int
    n_te: int
    delta: int = 1
    aux: AuxSpec = field(default_factory=AuxSpec)
    memory_span: int = 1
    scheme: WindowScheme = WindowScheme.ROLLING

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.memory_span < 1:
            raise ValueError("memory_span must be >= 1")
        if self.aux.m > self.n_val:
            raise ValueError(f"aux dimension m={self.aux.m} exceeds n_val={self.n_val}")


@dataclass(frozen=True)
class QfcvOutput:
    interval: IntervalRecord
    point: float
    lo_model: LinearQuantileModel
    hi_model: LinearQuantileModel
    pairs: ErrPairs


def aux_block_slices(n_val: int, m: int) -> list[slice]:
    """m contiguous non-overlapping blocks covering 1..n_val, remainder
    spread over the earliest blocks."""
    if not 1 <= m <= n_val:
        raise ValueError(f"need 1 <= m <= n_val, got m={m}, n_val={n_val}")
    base, rem = divmod(n_val, m)
    sizes = [base + 1] * rem + [base] * (m - rem)
    edges = np.cumsum([0] + sizes)
    return [slice(int(edges[i]), int(edges[i + 1])) for i in range(m)]


def _aggregate_aux(val_loss: np.ndarray, m: int) -> np.ndarray:
    """(..., n_val) per-index validation losses -> (..., max(m, 1)) features."""
    if m == 0:
        return np.ones(val_loss.shape[:-1] + (1,))
    blocks = aux_block_slices(val_loss.shape[-1], m)
    return np.stack([val_loss[..., b].mean(axis=-1) for b in blocks], axis=-1)


def aux_features(train_x, train_y, val_x, val_y, forecaster, loss: LossFn, m: int) -> np.ndarray:
    """Auxiliary feature vector for one (train, validation) window pair: the
    mean validation loss on each of m contiguous subsets (model fit on the
    training window); m = 0 gives the constant feature 1."""
    val_y = np.asarray(val_y, dtype=float)
    if m > val_y.shape[0]:
        raise ValueError(f"m={m} exceeds validation size {val_y.shape[0]}")
    if m == 0:
        return np.ones(1)
    model = forecaster.fit(train_x, train_y)
    per_index = np.asarray(loss(model.predict(val_x), val_y), dtype=float)
    return _aggregate_aux(per_index, m)


@dataclass(frozen=True)
class FoldData:
    """Shared per-fold quantities: per-index validation losses with the fold
    model fit on D_i, and the mean test loss with the model fit on D_i*."""

    val_loss: np.ndarray  # (K, n_val)
    test_err: np.ndarray  # (K,)
    star_val_loss: np.ndarray  # (n_val,)


def _window_stack(arr: np.ndarray, starts: np.ndarray, width: int) -> np.ndarray:
    if arr.ndim == 1:
        return sliding_window_view(arr, width)[starts]
    return sliding_window_view(arr, (width, arr.shape[1]))[starts, 0]


def fold_losses(
    series: TimeSeries, layout: FoldLayout, forecaster, loss: LossFn
) -> FoldData:
    """Fit the forecaster on every fold's D_i and D_i* window and collect
    validation and test losses. Rolling layouts with a batch-capable
    forecaster are fitted vectorized."""
    if series.n < layout.n:
        raise ValueError(f"series of length {series.n} shorter than layout n = {layout.n}")
    k = layout.K
    batched = layout.scheme is WindowScheme.ROLLING and hasattr(forecaster, "fit_batch")
    if batched:
        starts = np.arange(k) * layout.delta
        x, y = series.x, series.y
        xd = _window_stack(x, starts, layout.n_tr)
        yd = _window_stack(y, starts, layout.n_tr)
        xv = _window_stack(x, starts + layout.n_tr, layout.n_val)
        yv = _window_stack(y, starts + layout.n_tr, layout.n_val)
        xds = _window_stack(x, starts + layout.n_val, layout.n_tr)
        yds = _window_stack(y, starts + layout.n_val, layout.n_tr)
        xt = _window_stack(x, starts + layout.n_tr + layout.n_val, layout.n_te)
        yt = _window_stack(y, starts + layout.n_tr + layout.n_val, layout.n_te)
        try:
            w, b = forecaster.fit_batch(xd, yd)
            val_loss = np.asarray(loss(predict_batch(w, b, xv), yv), dtype=float)
            ws, bs = forecaster.fit_batch(xds, yds)
            test_err = np.asarray(loss(predict_batch(ws, bs, xt), yt), dtype=float).mean(axis=1)
        except Exception:
            batched = False  # replay fold by fold to attach the failing index
    if not batched:
        val_loss = np.empty((k, layout.n_val))
        test_err = np.empty(k)
        for i in range(1, k + 1):
            try:
                d, v, ds, t = layout.d(i), layout.v(i), layout.d_star(i), layout.t(i)
                xd, yd = series.window(int(d[0]), int(d[-1]))
                xv, yv = series.window(int(v[0]), int(v[-1]))
                model = forecaster.fit(xd, yd)
                val_loss[i - 1] = loss(model.predict(xv), yv)
                xds, yds = series.window(int(ds[0]), int(ds[-1]))
                xt, yt = series.window(int(t[0]), int(t[-1]))
                model_star = forecaster.fit(xds, yds)
                test_err[i - 1] = np.mean(loss(model_star.predict(xt), yt))
            except Exception as exc:
                raise RuntimeError(f"forecaster failed on fold {i}: {exc}") from exc
    sd = layout.star_d
    sv = layout.star_v
    x_sd, y_sd = series.window(int(sd[0]), int(sd[-1]))
    x_sv, y_sv = series.window(int(sv[0]), int(sv[-1]))
    star_model = forecaster.fit(x_sd, y_sd)
    star_val_loss = np.asarray(loss(star_model.predict(x_sv), y_sv), dtype=float)
    return FoldData(val_loss=val_loss, test_err=test_err, star_val_loss=star_val_loss)


def compute_err_pairs(
    series: TimeSeries,
    layout: FoldLayout,
    forecaster,
    loss: LossFn,
    aux: AuxSpec = AuxSpec(),
) -> tuple[ErrPairs, np.ndarray]:
    """The K fold tuples plus the star auxiliary feature, all computable from
    z_{1:n}."""
    if aux.m > layout.n_val:
        raise ValueError(f"aux dimension m={aux.m} exceeds n_val={layout.n_val}")
    data = fold_losses(series, layout, forecaster, loss)
    err_val = _aggregate_aux(data.val_loss, aux.m)
    star_val = _aggregate_aux(data.star_val_loss, aux.m)
    return ErrPairs(err_val=err_val, err_test=data.test_err, m=aux.m), star_val


def star_test_error(series: TimeSeries, layout: FoldLayout, forecaster, loss: LossFn) -> float:
    """Realized stochastic test error: model fit on the star training window
    D*, averaged loss over T = {n+1..n+n_te}. Needs the series extended
    through n + n_te."""
    t_idx = layout.star_t
    if series.n < t_idx[-1]:
        raise ValueError(f"series of length {series.n} is missing test indices up to {t_idx[-1]}")
    ds = layout.star_d_star
    x_tr, y_tr = series.window(int(ds[0]), int(ds[-1]))
    x_te, y_te = series.window(int(t_idx[0]), int(t_idx[-1]))
    model = forecaster.fit(x_tr, y_tr)
    return float(np.mean(loss(model.predict(x_te), y_te)))


def _stack_memory(pairs: ErrPairs, star_val: np.ndarray, span: int):
    """Lag-stacked design per the longer-memory variant: row i holds
    (err_val_i, ..., err_val_{i-span+1}); the star row holds
    (star_val, err_val_K, ..., err_val_{K-span+2})."""
    k = len(pairs)
    ev = pairs.err_val
    cols = [ev[span - 1 - lag : k - lag] for lag in range(span)]
    design = np.hstack(cols)
    targets = pairs.err_test[span - 1 :]
    star_cols = [np.atleast_1d(star_val)] + [ev[k - 1 - lag] for lag in range(span - 1)]
    star_row = np.concatenate(star_cols)
    return design, targets, star_row


def qfcv_interval(
    pairs: ErrPairs,
    star_val: np.ndarray,
    alpha: float,
    memory_span: int = 1,
    *,
    clamp_nonnegative: bool = True,
    t: int = 0,
    method: str = "qfcv",
    slope_brackets: tuple | None = None,
) -> QfcvOutput:
    """Fit the alpha/2 and 1 - alpha/2 quantile regressions and evaluate both
    at the star feature; endpoints are swapped if they cross and the lower
    endpoint is clamped at zero for nonnegative losses."""
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if memory_span < 1:
        raise ValueError("memory_span must be >= 1")
    k = len(pairs)
    if pairs.m == 0:
        k_min = 2
    elif memory_span == 1:
        k_min = pairs.m + 2
    else:
        # lag stacking drops span-1 rows and widens the design to m*span
        k_min = pairs.m * memory_span + memory_span + 1
    if k < k_min:
        raise ValueError(
            f"insufficient folds: K = {k}, minimum K = {k_min} "
            f"for m = {pairs.m}, memory_span = {memory_span}"
        )
    if pairs.m == 0:
        lo_v = empirical_quantile(pairs.err_test, alpha / 2)
        hi_v = empirical_quantile(pairs.err_test, 1 - alpha / 2)
        lo_m = LinearQuantileModel(alpha / 2, lo_v, np.zeros(0))
        hi_m = LinearQuantileModel(1 - alpha / 2, hi_v, np.zeros(0))
        point = float(np.mean(pairs.err_test))
    else:
        design, targets, star_row = _stack_memory(pairs, star_val, memory_span)
        br_lo, br_hi = slope_brackets if slope_brackets is not None else (None, None)
        lo_m = fit_linear_quantile(design, targets, alpha / 2, slope_bracket=br_lo)
        hi_m = fit_linear_quantile(design, targets, 1 - alpha / 2, slope_bracket=br_hi)
        lo_v = float(lo_m.predict(star_row))
        hi_v = float(hi_m.predict(star_row))
        point = _affine_point(design, targets, star_row)
    if lo_v > hi_v:
        lo_v, hi_v = hi_v, lo_v
    if clamp_nonnegative:
        lo_v = max(lo_v, 0.0)
        hi_v = max(hi_v, 0.0)
    interval = IntervalRecord(lo=lo_v, hi=hi_v, method=method, alpha=alpha, t=t)
    return QfcvOutput(interval=interval, point=point, lo_model=lo_m, hi_model=hi_m, pairs=pairs)


def _affine_point(design: np.ndarray, targets: np.ndarray, star_row: np.ndarray) -> float:
    a = np.hstack([np.ones((design.shape[0], 1)), design])
    coef, *_ = np.linalg.lstsq(a, targets, rcond=None)
    return float(coef[0] + star_row @ coef[1:])


def qfcv_point(pairs: ErrPairs, star_val: np.ndarray, memory_span: int = 1) -> float:
    """Squared-loss affine regression of err_test on err_val, evaluated at
    the star feature."""
    if pairs.m == 0:
        return float(np.mean(pairs.err_test))
    design, targets, star_row = _stack_memory(pairs, star_val, memory_span)
    return _affine_point(design, targets, star_row)


def run_qfcv(
    series: TimeSeries,
    forecaster,
    loss: LossFn,
    config: QfcvConfig,
    *,
    n: int | None = None,
) -> QfcvOutput:
    """End-to-end QFCV on z_{1:n} (n defaults to the series length)."""
    n = series.n if n is None else n
    layout = build_fold_layout(
        n, config.n_tr, config.n_val, config.n_te, config.delta, config.scheme
    )
    pairs, star_val = compute_err_pairs(series.head(n), layout, forecaster, loss, config.aux)
    return qfcv_interval(
        pairs,
        star_val,
        config.alpha,
        config.memory_span,
        clamp_nonnegative=loss.nonnegative,
        t=n,
    )
