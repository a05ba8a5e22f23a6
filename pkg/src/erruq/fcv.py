"""CLT-based forward cross-validation: the fold-mean point estimator, three
standard-error estimators (naive, autocovariance-corrected, scaling-
corrected), and the resulting symmetric intervals.

Fold errors E_i are mean validation losses with the model fit on D_i; the
point estimate is their mean. The naive standard error treats folds as
independent; the autocovariance correction adds truncated sample-
autocovariance terms (a confidence interval for the expected error); the
scaling correction multiplies by sqrt(K) to target the spread of the
stochastic error itself (a prediction interval).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import FoldLayout, IntervalRecord, LossFn, TimeSeries
from .qfcv import fold_losses
from .quantreg import inv_normal_cdf

__all__ = [
    "FoldErrors",
    "FcvConfig",
    "AutocovarianceError",
    "fcv_fold_errors",
    "fcv_point",
    "sample_autocov",
    "fcv_se",
    "fcv_interval",
    "default_k_trun",
    "VARIANTS",
]

VARIANTS = ("naive", "autocov", "scaling")

_METHOD_TAGS = {"naive": "fcv", "autocov": "fcv_c", "scaling": "fcv_p"}


class AutocovarianceError(RuntimeError):
    """Negative variance estimate after autocovariance correction."""

    def __init__(self, radicand: float, k_trun: int):
        self.radicand = radicand
        self.k_trun = k_trun
        super().__init__(
            f"autocovariance-corrected variance estimate is negative ({radicand:.3e}) "
            f"at K_trun={k_trun}; try a smaller truncation lag"
        )


@dataclass(frozen=True)
class FoldErrors:
    """Per-fold validation errors E_1..E_K."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size == 0:
            raise ValueError("FoldErrors requires at least one fold")
        if not np.all(np.isfinite(v)):
            raise ValueError("fold errors contain non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def k(self) -> int:
        return self.values.shape[0]

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))


@dataclass(frozen=True)
class FcvConfig:
    variant: str = "naive"
    alpha: float = 0.1
    k_trun: int | None = None  # autocov only; defaults to ceil(K^(1/3))

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.k_trun is not None and self.k_trun < 0:
            raise ValueError("k_trun must be >= 0")


def default_k_trun(k: int) -> int:
    """Slowly growing truncation lag ceil(K^(1/3)), capped below K."""
    return min(math.ceil(k ** (1.0 / 3.0)), k - 1)


def fcv_fold_errors(series: TimeSeries, layout: FoldLayout, forecaster, loss: LossFn) -> FoldErrors:
    """E_i = mean loss over V_i with the model fit on D_i, for i = 1..K."""
    data = fold_losses(series, layout, forecaster, loss)
    return FoldErrors(data.val_loss.mean(axis=1))


def fcv_point(e: FoldErrors) -> float:
    """Mean fold error; unbiased for the expected test error under
    stationarity when n_te = n_val."""
    return e.mean


def sample_autocov(e: FoldErrors, s: int) -> float:
    """gamma_hat(s) = (1/(K-s)) sum_{i<=K-s} (E_i - Ebar)(E_{i+s} - Ebar)."""
    if not 0 <= s < e.k:
        raise ValueError(f"lag s={s} outside 0..{e.k - 1}")
    d = e.values - e.mean
    return float(np.dot(d[: e.k - s], d[s:]) / (e.k - s))


def fcv_se(e: FoldErrors, config: FcvConfig) -> float:
    """Standard-error estimate for the configured variant.

    naive   = sqrt(gamma_hat(0) / K)
    autocov = sqrt((gamma_hat(0) + 2 sum_{s=1}^{K_trun} (1 - s/K) gamma_hat(s)) / K)
    scaling = sqrt(K) * naive
    """
    if e.k < 2:
        raise ValueError("standard errors need at least two folds")
    naive = math.sqrt(sample_autocov(e, 0)) / math.sqrt(e.k)
    if config.variant == "naive":
        return naive
    if config.variant == "scaling":
        return math.sqrt(e.k) * naive
    k_trun = default_k_trun(e.k) if config.k_trun is None else config.k_trun
    if not k_trun < e.k:
        raise ValueError(f"k_trun={k_trun} must be < K={e.k}")
    radicand = sample_autocov(e, 0)
    for s in range(1, k_trun + 1):
        radicand += 2.0 * (1.0 - s / e.k) * sample_autocov(e, s)
    if radicand < 0:
        raise AutocovarianceError(radicand, k_trun)
    return math.sqrt(radicand) / math.sqrt(e.k)


def fcv_interval(e: FoldErrors, config: FcvConfig, t: int = 0) -> IntervalRecord:
    """Point +/- z_{1-alpha/2} * SE, tagged with the variant."""
    point = fcv_point(e)
    z = inv_normal_cdf(1 - config.alpha / 2)
    se = fcv_se(e, config)
    return IntervalRecord(
        lo=point - z * se,
        hi=point + z * se,
        method=_METHOD_TAGS[config.variant],
        alpha=config.alpha,
        t=t,
    )
