import numpy as np
import pytest

from erruq import (
    Garch11Model,
    GarchForecaster,
    LassoForecaster,
    LassoSpec,
    RidgeForecaster,
    RidgeSpec,
    fit_garch11,
    fit_lasso,
    fit_ridge,
    garch_multiperiod_forecast,
    simulate_garch_series,
    RngStream,
)
from erruq.forecasters import LassoConvergenceError, _gaussian_negloglik, predict_batch


# ---------------------------------------------------------------------------
# ridge
# ---------------------------------------------------------------------------


def test_ridge_exact_interpolation():
    model = fit_ridge([[1.0], [2.0]], [2.0, 4.0], RidgeSpec(lam=0.0))
    assert model.coef[0] == pytest.approx(2.0, abs=1e-12)


def test_ridge_shrinkage_limit():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(30, 4))
    y = rng.normal(size=30)
    model = fit_ridge(x, y, RidgeSpec(lam=1e9))
    assert np.linalg.norm(model.coef) < 1e-3


def test_ridge_hand_solved_normal_equation():
    # (x'x + lam) w = x'y -> (1 + 1) w = 1 -> w = 0.5
    model = fit_ridge([[1.0]], [1.0], RidgeSpec(lam=1.0))
    assert model.coef[0] == pytest.approx(0.5, abs=1e-14)


def test_ridge_singular_advises_regularization():
    x = np.ones((3, 2))  # duplicated columns
    with pytest.raises(ValueError, match="lam > 0"):
        fit_ridge(x, [1.0, 2.0, 3.0], RidgeSpec(lam=0.0))


def test_ridge_intercept():
    x = np.array([[0.0], [1.0], [2.0]])
    model = fit_ridge(x, 3 + 2 * x[:, 0], RidgeSpec(lam=0.0, include_intercept=True))
    assert model.intercept == pytest.approx(3.0, abs=1e-10)
    assert model.coef[0] == pytest.approx(2.0, abs=1e-10)


def test_ridge_permutation_invariance():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(25, 5))
    y = rng.normal(size=25)
    perm = rng.permutation(25)
    a = fit_ridge(x, y, RidgeSpec(lam=0.7))
    b = fit_ridge(x[perm], y[perm], RidgeSpec(lam=0.7))
    assert np.allclose(a.coef, b.coef, atol=1e-12)


# ---------------------------------------------------------------------------
# lasso
# ---------------------------------------------------------------------------


def _soft(z, lam):
    return np.sign(z) * max(abs(z) - lam, 0.0)


def test_lasso_soft_threshold_oracle():
    # orthonormalized single feature: w = soft_threshold(c, lam), c = (1/n) x.y
    x = np.tile([1.0, -1.0], 10)[:, None]  # (1/n) sum x^2 = 1
    rng = np.random.default_rng(1)
    y = 0.8 * x[:, 0] + 0.1 * rng.normal(size=20)
    c = float(x[:, 0] @ y) / 20
    for lam in (0.05, 0.3, abs(c) + 0.1):
        model = fit_lasso(x, y, LassoSpec(lam=lam))
        assert model.coef[0] == pytest.approx(_soft(c, lam), abs=1e-9)


def test_lasso_lambda_max_deactivates():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(40, 6))
    y = rng.normal(size=40)
    lam_max = np.max(np.abs(x.T @ y / 40))
    model = fit_lasso(x, y, LassoSpec(lam=lam_max * 1.000001))
    assert np.all(model.coef == 0.0)


def test_lasso_zero_penalty_matches_least_squares():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(60, 5))
    y = x @ np.array([1.0, -2.0, 0.0, 0.5, 3.0]) + 0.1 * rng.normal(size=60)
    ols = fit_ridge(x, y, RidgeSpec(lam=0.0))
    lasso = fit_lasso(x, y, LassoSpec(lam=0.0, tol=1e-10))
    assert np.allclose(lasso.coef, ols.coef, atol=1e-6)


def test_lasso_default_lambda_rule_sparse_but_nonzero():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(40, 20))
    beta = np.zeros(20)
    beta[:4] = 1.0
    y = x @ beta + rng.normal(size=40)
    model = fit_lasso(x, y)  # lam = 0.1 * lam_max
    nnz = np.count_nonzero(model.coef)
    assert 0 < nnz < 20


def test_lasso_permutation_invariance():
    rng = np.random.default_rng(6)
    x = rng.normal(size=(30, 4))
    y = rng.normal(size=30)
    perm = rng.permutation(30)
    a = fit_lasso(x, y, LassoSpec(lam=0.1))
    b = fit_lasso(x[perm], y[perm], LassoSpec(lam=0.1))
    assert np.allclose(a.coef, b.coef, atol=1e-10)


def test_lasso_nonconvergence_reports_residual():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(20, 3))
    y = rng.normal(size=20)
    with pytest.raises(LassoConvergenceError, match="did not converge"):
        fit_lasso(x, y, LassoSpec(lam=0.01, max_sweeps=1, tol=1e-16))


def test_batch_fits_match_single_fits():
    rng = np.random.default_rng(8)
    xs = rng.normal(size=(7, 30, 5))
    ys = rng.normal(size=(7, 30))
    for forecaster in (
        RidgeForecaster(RidgeSpec(lam=0.5)),
        LassoForecaster(LassoSpec(lam=0.05)),
        LassoForecaster(LassoSpec()),  # per-window default lambda
        RidgeForecaster(RidgeSpec(lam=0.5, include_intercept=True)),
    ):
        w, b = forecaster.fit_batch(xs, ys)
        for i in range(7):
            single = forecaster.fit(xs[i], ys[i])
            assert np.allclose(w[i], single.coef, atol=1e-9)
            assert b[i] == pytest.approx(single.intercept, abs=1e-9)
        x_new = rng.normal(size=(7, 4, 5))
        preds = predict_batch(w, b, x_new)
        assert np.allclose(preds[0], x_new[0] @ w[0] + b[0], atol=1e-12)


# ---------------------------------------------------------------------------
# GARCH(1,1)
# ---------------------------------------------------------------------------


def test_garch_recovery_on_simulated_data():
    series = simulate_garch_series(0.1, 0.1, 0.8, 10_000, RngStream(42))
    model = fit_garch11(series.x[:, 0])
    assert model.omega == pytest.approx(0.1, rel=0.15)
    assert model.tau == pytest.approx(0.1, rel=0.15)
    assert model.beta_g == pytest.approx(0.8, rel=0.15)


def test_garch_rejects_degenerate_returns():
    with pytest.raises(ValueError, match="degenerate"):
        fit_garch11(np.zeros(100))
    with pytest.raises(ValueError):
        fit_garch11(np.ones(10))  # too short


def test_garch_ascent_property():
    series = simulate_garch_series(0.2, 0.15, 0.7, 2_000, RngStream(43))
    r = series.x[:, 0]
    model = fit_garch11(r)
    v = r**2
    var = float(np.var(r))
    init_nll = _gaussian_negloglik(0.05 * var, 0.1, 0.8, v, var)
    assert -model.loglik <= init_nll + 1e-9


def _toy_model(omega, tau, beta):
    return Garch11Model(
        omega=omega,
        tau=tau,
        beta_g=beta,
        sigma2=np.array([1.0, np.nan]),  # sigma^2_{t-1} = 1; last entry unused
        returns=np.array([1.0, 0.0]),  # V_{t-1} = 1
    )


def test_garch_multiperiod_recursion_examples():
    model = _toy_model(0.1, 0.2, 0.3)
    assert garch_multiperiod_forecast(model, 1) == pytest.approx(0.6)
    assert garch_multiperiod_forecast(model, 2) == pytest.approx(0.1 + 0.5 * 0.6)
    with pytest.raises(ValueError):
        garch_multiperiod_forecast(model, 0)
    with pytest.raises(ValueError):
        garch_multiperiod_forecast(model, 6, n_te=5)


def test_garch_memoryless_limit():
    model = _toy_model(0.25, 0.0, 0.0)
    for r in range(2, 6):
        assert garch_multiperiod_forecast(model, r) == pytest.approx(0.25)


def test_garch_monotone_convergence_to_long_run_variance():
    model = _toy_model(0.1, 0.2, 0.3)
    long_run = 0.1 / (1 - 0.5)
    f = [garch_multiperiod_forecast(model, r) for r in range(1, 30)]
    gaps = np.array(f) - long_run
    assert np.all(np.sign(gaps[:-1]) == np.sign(gaps[0]))
    assert np.all(np.abs(gaps[1:]) <= np.abs(gaps[:-1]))
    assert abs(gaps[-1]) < 1e-6


def test_garch_forecaster_pipeline_contract():
    series = simulate_garch_series(0.1, 0.1, 0.8, 400, RngStream(44))
    model = GarchForecaster().fit(series.x[:300], series.y[:300])
    preds = model.predict(series.x[300:305])
    expected = [garch_multiperiod_forecast(model.model, r) for r in range(1, 6)]
    assert np.allclose(preds, expected)
