"""Pinball loss, empirical quantiles, linear quantile regression, and the
standard-normal quantile function.

Quantile regression minimizes the empirical pinball risk

    (1/K) sum_i pinball_beta(y_i - a - x_i . w)

over an affine model. Three exact routes, dispatched on the feature count:

* m = 0: intercept-only; the minimizer is the empirical beta-quantile
  (lower point of the quantile set), returned directly.
* m = 1: the slope-profiled objective g(b) = min_a risk(a, b) is convex
  piecewise linear; bisection on its subgradient interval finds a point
  whose subgradient contains zero (an exact minimizer). If the certificate
  cannot be established the linear program below is used instead.
* m >= 2: the standard LP formulation (residual split into positive and
  negative parts) solved by HiGHS via scipy.

Targets and features are rescaled internally before solving; quantile
regression is exactly equivariant under those scalings.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sparse
from scipy.optimize import linprog
from scipy.special import ndtri

__all__ = [
    "pinball",
    "empirical_quantile",
    "inv_normal_cdf",
    "LinearQuantileModel",
    "QuantileFitError",
    "fit_linear_quantile",
    "pinball_risk",
]


class QuantileFitError(RuntimeError):
    pass


def _check_level(level: float) -> float:
    level = float(level)
    if not (0.0 < level < 1.0) or not np.isfinite(level):
        raise ValueError(f"quantile level must lie strictly inside (0, 1), got {level}")
    return level


def pinball(level: float, t) -> np.ndarray | float:
    """pinball_beta(t) = -t * (1{t <= 0} - beta): beta*t for t > 0,
    (1-beta)*(-t) for t <= 0."""
    beta = _check_level(level)
    t = np.asarray(t, dtype=float)
    out = np.where(t > 0, beta * t, (beta - 1.0) * t)
    return float(out) if out.ndim == 0 else out


def empirical_quantile(values, level: float) -> float:
    """Smallest valid quantile point q_{beta,min} of the empirical
    distribution: the ceil(beta*K)-th order statistic, stepping down to the
    (beta*K)-th when beta*K is an integer."""
    beta = _check_level(level)
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("empirical_quantile of an empty collection")
    if not np.all(np.isfinite(v)):
        raise ValueError("values contain non-finite entries")
    pos = _quantile_pos(v.size, beta)
    return float(np.partition(v, pos)[pos])


def _quantile_pos(k: int, beta: float) -> int:
    """0-based order-statistic position of q_{beta,min} among k values."""
    mk = beta * k
    nearest = round(mk)
    i = nearest if abs(mk - nearest) < 1e-9 and nearest >= 1 else int(np.ceil(mk))
    return min(max(i, 1), k) - 1


def inv_normal_cdf(p: float) -> float:
    """Standard normal quantile Phi^{-1}(p)."""
    p = float(p)
    if not (0.0 < p < 1.0):
        raise ValueError(f"p must lie strictly inside (0, 1), got {p}")
    return float(ndtri(p))


@dataclass(frozen=True)
class LinearQuantileModel:
    level: float
    intercept: float
    coef: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        _check_level(self.level)
        coef = np.atleast_1d(np.asarray(self.coef, dtype=float))
        object.__setattr__(self, "coef", coef)
        if not (np.isfinite(self.intercept) and np.all(np.isfinite(coef))):
            raise ValueError("quantile model coefficients must be finite")

    @property
    def m(self) -> int:
        return self.coef.shape[0]

    def predict(self, features) -> np.ndarray | float:
        f = np.asarray(features, dtype=float)
        if self.m == 0:
            if f.ndim <= 1:
                return float(self.intercept)
            return np.full(f.shape[0], self.intercept)
        out = f @ self.coef + self.intercept
        return float(out) if np.ndim(out) == 0 else out


def pinball_risk(intercept: float, coef, features, targets, level: float) -> float:
    """Mean pinball loss of an affine model; the quantity the fits minimize."""
    x = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)
    coef = np.atleast_1d(np.asarray(coef, dtype=float))
    pred = intercept if coef.size == 0 else x @ coef + intercept
    return float(np.mean(pinball(level, y - pred)))


def fit_linear_quantile(
    features,
    targets,
    level: float,
    *,
    slope_bracket: tuple[float, float] | None = None,
) -> LinearQuantileModel:
    """Affine minimizer of the empirical pinball risk.

    ``slope_bracket`` seeds the m = 1 search with an initial slope interval
    (it is expanded if it does not bracket the optimum, so correctness never
    depends on the hint).
    """
    beta = _check_level(level)
    x = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float).ravel()
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError(f"incompatible shapes features{x.shape}, targets{y.shape}")
    k, m = x.shape
    if k < m + 2:
        raise ValueError(f"need K >= m + 2 = {m + 2} observations, got K = {k}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("quantile regression data contains non-finite values")

    if m == 0:
        return LinearQuantileModel(beta, empirical_quantile(y, beta), np.zeros(0))

    col_range = x.max(axis=0) - x.min(axis=0)
    degenerate = bool(np.any(col_range == 0))
    if degenerate:
        warnings.warn(
            "constant feature column duplicates the intercept; fit is not unique",
            RuntimeWarning,
            stacklevel=2,
        )

    if m == 1:
        if col_range[0] == 0:
            return LinearQuantileModel(beta, empirical_quantile(y, beta), np.zeros(1), True)
        a, b = _fit_single_feature(x[:, 0], y, beta, slope_bracket)
        return LinearQuantileModel(beta, a, np.array([b]), degenerate)

    a, w = _fit_lp(x, y, beta)
    return LinearQuantileModel(beta, a, w, degenerate)


# ---------------------------------------------------------------------------
# m = 1: exact minimization of the slope-profiled objective
# ---------------------------------------------------------------------------


def _fit_single_feature(x, y, beta, slope_bracket):
    sx = float(np.max(np.abs(x))) or 1.0
    sy = float(np.max(np.abs(y))) or 1.0
    xs, ys = x / sx, y / sy
    hint = None
    if slope_bracket is not None:
        lo, hi = slope_bracket
        if np.isfinite(lo) and np.isfinite(hi) and lo <= hi:
            hint = (lo * sx / sy, hi * sx / sy)
    sol = _profile_minimize(xs, ys, beta, hint)
    if sol is None:
        a, w = _fit_lp(x[:, None], y, beta)
        return a, float(w[0])
    a, b = sol
    return a * sy, b * sy / sx


def _profile_minimize(x, y, beta, hint, max_iter=200):
    def grad(b):
        return _profile_subgradient(x, y, beta, b)

    span = float(np.max(y) - np.min(y))
    gap = float(np.max(x) - np.min(x))
    width = max(1.0, span / max(gap, 1e-300))
    lo, hi = hint if hint is not None else (-width, width)
    if lo == hi:
        lo, hi = lo - 1.0, hi + 1.0
    g_lo = grad(lo)
    for _ in range(max_iter):
        if g_lo is None or g_lo[0] <= 0:
            break
        lo -= max(abs(lo), width)
        g_lo = grad(lo)
    g_hi = grad(hi)
    for _ in range(max_iter):
        if g_hi is None or g_hi[1] >= 0:
            break
        hi += max(abs(hi), width)
        g_hi = grad(hi)
    for g, b in ((g_lo, lo), (g_hi, hi)):
        if g is not None and g[0] <= 0 <= g[1]:
            return g[2], b
    if g_lo is None or g_hi is None or g_lo[0] > 0 or g_hi[1] < 0:
        return None
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        g = grad(mid)
        if g is None:
            return None
        if g[0] <= 0 <= g[1]:
            return g[2], mid
        if g[1] < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, abs(lo), abs(hi)):
            break
    return None


def _profile_subgradient(x, y, beta, b):
    """Subgradient interval [d_lo, d_hi] of g(b) = min_a risk(a, b), plus the
    minimizing intercept. Returns None if the tie mass is infeasible (only
    possible through float classification noise)."""
    r = y - b * x
    a = float(np.partition(r, _quantile_pos(r.size, beta))[_quantile_pos(r.size, beta)])
    s = r - a
    scale = max(1.0, float(np.max(np.abs(r))))
    for ztol in (1e-12, 1e-9, 1e-6):
        tie = np.abs(s) <= ztol * scale
        pos = (s > 0) & ~tie
        neg = (s < 0) & ~tie
        fixed_sum = beta * np.count_nonzero(pos) + (beta - 1.0) * np.count_nonzero(neg)
        target = -fixed_sum
        xt = np.sort(x[tie])
        nt = xt.size
        slack = 1e-9 * max(1.0, abs(target))
        if not (nt * (beta - 1.0) - slack <= target <= nt * beta + slack):
            continue
        fixed_sx = beta * float(np.sum(x[pos])) + (beta - 1.0) * float(np.sum(x[neg]))
        d1 = -(fixed_sx + _greedy_tie_sum(xt, target, beta)) / y.size
        d2 = -(fixed_sx + _greedy_tie_sum(xt[::-1], target, beta)) / y.size
        return (min(d1, d2), max(d1, d2), a)
    return None


def _greedy_tie_sum(xt_ordered, target, beta):
    """min/max of sum psi_i x_i over psi_i in [beta-1, beta] with
    sum psi_i = target; visiting x ascending gives the min, descending the max."""
    rem = target - xt_ordered.size * (beta - 1.0)
    total = 0.0
    for xv in xt_ordered:
        add = min(1.0, max(0.0, rem))
        total += (beta - 1.0 + add) * xv
        rem -= add
    return total


# ---------------------------------------------------------------------------
# m >= 2 (and fallback): LP formulation solved by HiGHS
# ---------------------------------------------------------------------------


def _fit_lp(x, y, beta):
    k, m = x.shape
    s_col = np.max(np.abs(x), axis=0)
    s_col[s_col == 0] = 1.0
    sy = float(np.max(np.abs(y))) or 1.0
    xs = x / s_col
    ys = y / sy
    p = m + 1
    c = np.concatenate([np.zeros(p), beta * np.ones(k) / k, (1 - beta) * np.ones(k) / k])
    bounds = [(None, None)] * p + [(0, None)] * (2 * k)
    design = sparse.csr_matrix(np.hstack([np.ones((k, 1)), xs]))
    eye = sparse.identity(k, format="csr")
    a_eq = sparse.hstack([design, eye, -eye], format="csr")
    res = linprog(c, A_eq=a_eq, b_eq=ys, bounds=bounds, method="highs")
    if not res.success:
        raise QuantileFitError(f"quantile regression LP failed: {res.message}")
    sol = res.x[:p]
    return float(sol[0] * sy), sol[1:] * sy / s_col
