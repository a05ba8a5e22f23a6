"""Prediction algorithms used inside the error pipeline: ridge and lasso
linear forecasters plus a GARCH(1,1) multiperiod volatility forecaster.

Forecasters expose ``fit(x, y) -> model`` with ``model.predict(x_future)``
pure and deterministic. ``predict`` receives the feature rows of the block
immediately following the training window, in time order; linear models use
the features rowwise, the volatility model uses the row offset as the
forecast horizon.

Ridge and lasso also implement ``fit_batch`` over stacks of equally sized
training windows, which the fold pipeline uses to fit thousands of windows
in a few vectorized sweeps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter

__all__ = [
    "RidgeSpec",
    "LassoSpec",
    "LinearModel",
    "fit_ridge",
    "fit_lasso",
    "RidgeForecaster",
    "LassoForecaster",
    "Garch11Model",
    "GarchFitError",
    "LassoConvergenceError",
    "fit_garch11",
    "garch_multiperiod_forecast",
    "GarchForecaster",
]


@runtime_checkable
class Forecaster(Protocol):
    def fit(self, x: np.ndarray, y: np.ndarray): ...


class LassoConvergenceError(RuntimeError):
    """Coordinate descent failed to converge; carries the residual change."""

    def __init__(self, max_change: float, sweeps: int):
        self.max_change = max_change
        self.sweeps = sweeps
        super().__init__(
            f"lasso coordinate descent did not converge in {sweeps} sweeps "
            f"(last max coefficient change {max_change:.3e})"
        )


@dataclass(frozen=True)
class RidgeSpec:
    lam: float = 1.0
    include_intercept: bool = False

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise ValueError(f"ridge lambda must be finite and >= 0, got {self.lam}")


@dataclass(frozen=True)
class LassoSpec:
    """``lam=None`` selects lam_frac * lam_max per training window, where
    lam_max = max_j |(1/n) sum_t x_tj y_t| is the smallest penalty that
    zeroes every coefficient."""

    lam: float | None = None
    lam_frac: float = 0.1
    include_intercept: bool = False
    tol: float = 1e-7
    max_sweeps: int = 10_000

    def __post_init__(self):
        if self.lam is not None and not (np.isfinite(self.lam) and self.lam >= 0):
            raise ValueError(f"lasso lambda must be finite and >= 0, got {self.lam}")
        if not 0 <= self.lam_frac:
            raise ValueError("lam_frac must be >= 0")


@dataclass(frozen=True)
class LinearModel:
    coef: np.ndarray
    intercept: float = 0.0

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.coef + self.intercept


def _as_xy(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] != y.shape[0] or y.ndim != 1:
        raise ValueError(f"incompatible shapes x{x.shape}, y{y.shape}")
    if x.shape[0] < 1:
        raise ValueError("need at least one training point")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("training data contains non-finite values")
    return x, y


def fit_ridge(x, y, spec: RidgeSpec = RidgeSpec()) -> LinearModel:
    """Minimize sum (y - x.w)^2 + lam ||w||^2 in closed form."""
    x, y = _as_xy(x, y)
    w, b = _ridge_batch(x[None], y[None], spec)
    return LinearModel(coef=w[0], intercept=float(b[0]))


def _ridge_batch(xs: np.ndarray, ys: np.ndarray, spec: RidgeSpec):
    B, n, p = xs.shape
    if spec.include_intercept:
        mx = xs.mean(axis=1, keepdims=True)
        my = ys.mean(axis=1, keepdims=True)
        xc, yc = xs - mx, ys - my
    else:
        xc, yc = xs, ys
    g = np.einsum("bnp,bnq->bpq", xc, xc, optimize=True)
    c = np.einsum("bnp,bn->bp", xc, yc, optimize=True)
    a = g + spec.lam * np.eye(p)
    try:
        w = np.linalg.solve(a, c[..., None])[..., 0]
    except np.linalg.LinAlgError:
        raise ValueError(
            "singular normal equations with lam=0; use lam > 0 to regularize"
        ) from None
    if spec.include_intercept:
        b = (my[:, 0] - np.einsum("bp,bp->b", mx[:, 0, :], w))
    else:
        b = np.zeros(B)
    return w, b


def _lasso_lambda(c_over_n: np.ndarray, spec: LassoSpec) -> np.ndarray:
    if spec.lam is not None:
        return np.full(c_over_n.shape[0], float(spec.lam))
    return spec.lam_frac * np.max(np.abs(c_over_n), axis=1)


def _lasso_batch(xs: np.ndarray, ys: np.ndarray, spec: LassoSpec, track_objective=False):
    """Cyclic coordinate descent on (1/(2n))||y - Xw||^2 + lam ||w||_1 for a
    stack of equally shaped problems. Returns (W, b, lam, sweeps, objectives)."""
    B, n, p = xs.shape
    if spec.include_intercept:
        mx = xs.mean(axis=1, keepdims=True)
        my = ys.mean(axis=1, keepdims=True)
        xc, yc = xs - mx, ys - my
    else:
        xc, yc = xs, ys
    g = np.einsum("bnp,bnq->bpq", xc, xc, optimize=True) / n
    c = np.einsum("bnp,bn->bp", xc, yc, optimize=True) / n
    lam = _lasso_lambda(c, spec)
    gd = np.einsum("bpp->bp", g).copy()
    active = gd > 0  # zero-variance columns stay at 0
    w = np.zeros((B, p))
    objectives: list[np.ndarray] = []
    if track_objective:
        objectives.append(_lasso_objective(xc, yc, w, lam))
    max_change = np.inf
    for sweep in range(spec.max_sweeps):
        max_change = 0.0
        for j in range(p):
            rho = c[:, j] - np.einsum("bp,bp->b", g[:, j, :], w) + gd[:, j] * w[:, j]
            wj = np.sign(rho) * np.maximum(np.abs(rho) - lam, 0.0)
            np.divide(wj, gd[:, j], out=wj, where=active[:, j])
            wj[~active[:, j]] = 0.0
            max_change = max(max_change, float(np.max(np.abs(wj - w[:, j]))))
            w[:, j] = wj
        if track_objective:
            obj = _lasso_objective(xc, yc, w, lam)
            prev = objectives[-1]
            if np.any(obj > prev + 1e-10 * np.maximum(1.0, np.abs(prev))):
                raise AssertionError("lasso objective increased across a sweep")
            objectives.append(obj)
        if max_change < spec.tol:
            break
    else:
        raise LassoConvergenceError(max_change, spec.max_sweeps)
    if spec.include_intercept:
        b = my[:, 0] - np.einsum("bp,bp->b", mx[:, 0, :], w)
    else:
        b = np.zeros(B)
    return w, b, lam, sweep + 1, objectives


def _lasso_objective(xc, yc, w, lam):
    resid = yc - np.einsum("bnp,bp->bn", xc, w)
    n = xc.shape[1]
    return 0.5 * np.sum(resid**2, axis=1) / n + lam * np.sum(np.abs(w), axis=1)


def fit_lasso(x, y, spec: LassoSpec = LassoSpec()) -> LinearModel:
    """Coordinate-descent minimizer of (1/(2n)) sum (y - x.w)^2 + lam ||w||_1.

    The objective is checked to be non-increasing across sweeps.
    """
    x, y = _as_xy(x, y)
    w, b, _, _, _ = _lasso_batch(x[None], y[None], spec, track_objective=True)
    return LinearModel(coef=w[0], intercept=float(b[0]))


class RidgeForecaster:
    def __init__(self, spec: RidgeSpec = RidgeSpec()):
        self.spec = spec

    def fit(self, x, y) -> LinearModel:
        return fit_ridge(x, y, self.spec)

    def fit_batch(self, xs, ys):
        return _ridge_batch(np.asarray(xs, dtype=float), np.asarray(ys, dtype=float), self.spec)


class LassoForecaster:
    def __init__(self, spec: LassoSpec = LassoSpec()):
        self.spec = spec

    def fit(self, x, y) -> LinearModel:
        return fit_lasso(x, y, self.spec)

    def fit_batch(self, xs, ys):
        w, b, _, _, _ = _lasso_batch(
            np.asarray(xs, dtype=float), np.asarray(ys, dtype=float), self.spec
        )
        return w, b


def predict_batch(w: np.ndarray, b: np.ndarray, x_blocks: np.ndarray) -> np.ndarray:
    """Predictions for a stack of future blocks: (B, h, p) -> (B, h)."""
    return np.einsum("bhp,bp->bh", x_blocks, w, optimize=True) + b[:, None]


# ---------------------------------------------------------------------------
# GARCH(1,1)
# ---------------------------------------------------------------------------


class GarchFitError(RuntimeError):
    """Quasi-likelihood optimization failed; carries the last feasible iterate."""

    def __init__(self, message: str, last_params: tuple[float, float, float] | None = None):
        self.last_params = last_params
        if last_params is not None:
            message += f" (last feasible iterate omega={last_params[0]:.4g}, tau={last_params[1]:.4g}, beta={last_params[2]:.4g})"
        super().__init__(message)


@dataclass(frozen=True)
class Garch11Model:
    """sigma_t^2 = omega + tau V_{t-1} + beta_g sigma_{t-1}^2 with V_t = R_t^2.

    ``sigma2`` holds the fitted conditional variances over the training
    window (sigma2[0] is the sample-variance initialization).
    """

    omega: float
    tau: float
    beta_g: float
    sigma2: np.ndarray
    returns: np.ndarray
    loglik: float = np.nan

    def __post_init__(self):
        if not (self.omega > 0 and self.tau >= 0 and self.beta_g >= 0):
            raise ValueError("require omega > 0 and tau, beta_g >= 0")
        if not self.tau + self.beta_g < 1:
            raise ValueError(f"require tau + beta_g < 1, got {self.tau + self.beta_g}")


def _sigma2_path(omega, tau, beta, v, s2_init):
    out = np.empty(v.shape[0])
    out[0] = s2_init
    if v.shape[0] > 1:
        u = omega + tau * v[:-1]
        out[1:] = lfilter([1.0], [1.0, -beta], u, zi=np.array([beta * s2_init]))[0]
    return out


def _gaussian_negloglik(omega, tau, beta, v, s2_init):
    s2 = _sigma2_path(omega, tau, beta, v, s2_init)
    return 0.5 * float(np.sum(np.log(s2) + v / s2))


def _from_unconstrained(z):
    # +/-30 keeps tau + beta_g strictly below 1 in floating point even when
    # the optimizer runs to the integrated-GARCH boundary
    u, a, b = np.clip(z, -30.0, 30.0)
    omega = np.exp(u)
    den = 1.0 + np.exp(a) + np.exp(b)
    return omega, np.exp(a) / den, np.exp(b) / den


def fit_garch11(returns, init: tuple[float, float, float] | None = None) -> Garch11Model:
    """Gaussian quasi-maximum-likelihood fit of (omega, tau, beta_g).

    Derivative-free simplex search on an unconstrained reparameterization
    (log omega; softmax map keeping tau, beta_g >= 0 and tau + beta_g < 1).
    """
    r = np.asarray(returns, dtype=float)
    if r.ndim != 1 or r.shape[0] < 50:
        raise ValueError(f"need a 1-d sequence of >= 50 returns, got shape {r.shape}")
    if not np.all(np.isfinite(r)):
        raise ValueError("returns contain non-finite values")
    var = float(np.var(r))
    if var <= 0:
        raise ValueError("constant returns: degenerate likelihood, cannot fit GARCH")
    v = r**2
    s2_init = var
    if init is None:
        init = (0.05 * var, 0.1, 0.8)
    omega0, tau0, beta0 = init
    rest = 1.0 - tau0 - beta0
    if not (omega0 > 0 and tau0 > 0 and beta0 > 0 and rest > 0):
        raise ValueError(f"initial guess {init} violates the GARCH constraints")
    z0 = np.array([np.log(omega0), np.log(tau0 / rest), np.log(beta0 / rest)])

    def objective(z):
        return _gaussian_negloglik(*_from_unconstrained(z), v, s2_init)

    res = minimize(
        objective,
        z0,
        method="Nelder-Mead",
        options={"maxiter": 4000, "xatol": 1e-9, "fatol": 1e-10},
    )
    omega, tau, beta = _from_unconstrained(res.x)
    if not res.success or not np.isfinite(res.fun):
        raise GarchFitError("GARCH simplex search failed to converge", (omega, tau, beta))
    return Garch11Model(
        omega=float(omega),
        tau=float(tau),
        beta_g=float(beta),
        sigma2=_sigma2_path(omega, tau, beta, v, s2_init),
        returns=r,
        loglik=-float(res.fun),
    )


def garch_multiperiod_forecast(model: Garch11Model, r: int, n_te: int | None = None) -> float:
    """Variance forecast at horizon r.

    r = 1 evaluates omega + tau V_{t-1} + beta_g sigma_{t-1}^2; each further
    horizon applies omega + (tau + beta_g) * previous forecast.
    """
    if r < 1 or (n_te is not None and r > n_te):
        hi = n_te if n_te is not None else "inf"
        raise ValueError(f"horizon r={r} outside 1..{hi}")
    if model.returns.shape[0] < 2:
        raise ValueError("model needs at least two fitted points to forecast")
    f = model.omega + model.tau * model.returns[-2] ** 2 + model.beta_g * model.sigma2[-2]
    for _ in range(r - 1):
        f = model.omega + (model.tau + model.beta_g) * f
    return float(f)


@dataclass(frozen=True)
class _GarchPredictor:
    model: Garch11Model

    def predict(self, x_future: np.ndarray) -> np.ndarray:
        h = np.asarray(x_future).shape[0]
        return np.array([garch_multiperiod_forecast(self.model, r) for r in range(1, h + 1)])


class GarchForecaster:
    """Pipeline adapter: features hold the returns (first column), outcomes
    the realized volatility V_t = R_t^2; predictions are multiperiod variance
    forecasts for the block following the training window."""

    def __init__(self, init: tuple[float, float, float] | None = None):
        self.init = init

    def fit(self, x, y) -> _GarchPredictor:
        x = np.asarray(x, dtype=float)
        returns = x[:, 0] if x.ndim == 2 else x
        return _GarchPredictor(fit_garch11(returns, self.init))
