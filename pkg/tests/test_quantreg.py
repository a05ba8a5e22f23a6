import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from erruq import (
    empirical_quantile,
    fit_linear_quantile,
    inv_normal_cdf,
    pinball,
    pinball_risk,
)
from erruq.quantreg import _fit_lp

LEVELS = (0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95)


# ---------------------------------------------------------------------------
# pinball
# ---------------------------------------------------------------------------


def test_pinball_examples():
    assert pinball(0.5, 2.0) == pytest.approx(1.0)
    assert pinball(0.9, 1.0) == pytest.approx(0.9)
    assert pinball(0.9, -1.0) == pytest.approx(0.1)
    assert pinball(0.3, 0.0) == 0.0


def test_pinball_rejects_bad_level():
    for bad in (0.0, 1.0, -0.2, 1.7):
        with pytest.raises(ValueError):
            pinball(bad, 1.0)


def test_pinball_convex_nonnegative_on_grid():
    grid = np.linspace(-5, 5, 201)
    for beta in LEVELS:
        vals = pinball(beta, grid)
        assert np.all(vals >= 0)
        assert vals[100] == 0.0
        # convexity: midpoint under chord
        mid = pinball(beta, (grid[:-2] + grid[2:]) / 2)
        assert np.all(mid <= (vals[:-2] + vals[2:]) / 2 + 1e-12)


# ---------------------------------------------------------------------------
# empirical quantile
# ---------------------------------------------------------------------------


def test_empirical_quantile_examples():
    assert empirical_quantile([1, 2, 3, 4, 5], 0.5) == 3.0
    assert empirical_quantile([1, 2], 0.5) == 1.0  # minimal quantile convention
    assert empirical_quantile([5], 0.9) == 5.0


def test_empirical_quantile_uniform_mc():
    rng = np.random.default_rng(0)
    draws = rng.uniform(size=1000)
    assert empirical_quantile(draws, 0.9) == pytest.approx(0.9, abs=0.05)


def test_empirical_quantile_empty():
    with pytest.raises(ValueError):
        empirical_quantile([], 0.5)


def _brute_force_min_risk(values, beta):
    # the empirical pinball risk is minimized at one of the data points
    return min(np.mean(pinball(beta, values - t)) for t in values)


@given(
    st.lists(st.integers(min_value=-5, max_value=5), min_size=2, max_size=40),
    st.sampled_from(LEVELS),
)
@settings(max_examples=200, deadline=None)
def test_empirical_quantile_minimizes_pinball_risk(values, beta):
    v = np.asarray(values, dtype=float)
    q = empirical_quantile(v, beta)
    assert np.mean(pinball(beta, v - q)) == _brute_force_min_risk(v, beta)


# ---------------------------------------------------------------------------
# standard normal quantile
# ---------------------------------------------------------------------------


def _bisect_normal_quantile(p, tol=1e-12):
    def cdf(z):
        return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))

    lo, hi = -10.0, 10.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_inv_normal_cdf_examples():
    assert inv_normal_cdf(0.5) == 0.0
    assert inv_normal_cdf(0.975) == pytest.approx(1.95996398, abs=1e-8)


def test_inv_normal_cdf_antisymmetry():
    for p in (0.01, 0.2, 0.37, 0.5, 0.77, 0.95, 0.999):
        assert inv_normal_cdf(p) == pytest.approx(-inv_normal_cdf(1 - p), abs=1e-12)


def test_inv_normal_cdf_matches_bisection_oracle():
    for p in np.linspace(0.01, 0.99, 99):
        assert abs(inv_normal_cdf(p) - _bisect_normal_quantile(p)) <= 1e-8


def test_inv_normal_cdf_domain():
    for bad in (0.0, 1.0, -0.1, 1.1):
        with pytest.raises(ValueError):
            inv_normal_cdf(bad)


# ---------------------------------------------------------------------------
# linear quantile regression
# ---------------------------------------------------------------------------


def test_intercept_only_equals_empirical_quantile():
    rng = np.random.default_rng(1)
    for beta in LEVELS:
        y = rng.normal(size=37)
        model = fit_linear_quantile(np.empty((37, 0)), y, beta)
        assert model.intercept == empirical_quantile(y, beta)
        assert model.m == 0
        got = pinball_risk(model.intercept, model.coef, np.empty((37, 0)), y, beta)
        # equal in real arithmetic; tied order statistics may differ by 1 ulp
        assert got <= _brute_force_min_risk(y, beta) + 4e-16 * max(1.0, got)


def test_interpolation_zero_risk():
    rng = np.random.default_rng(2)
    x1 = rng.normal(size=(50, 1))
    y1 = 3.0 - 2.0 * x1[:, 0]
    x2 = rng.normal(size=(50, 3))
    y2 = 1.0 + x2 @ np.array([0.5, -1.0, 2.0])
    for beta in LEVELS:
        m1 = fit_linear_quantile(x1, y1, beta)
        assert pinball_risk(m1.intercept, m1.coef, x1, y1, beta) <= 1e-10
        m2 = fit_linear_quantile(x2, y2, beta)
        assert pinball_risk(m2.intercept, m2.coef, x2, y2, beta) <= 1e-10


def test_median_slope_consistency():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(200, 1))
    y = 2.0 * x[:, 0] + rng.laplace(size=200)
    model = fit_linear_quantile(x, y, 0.5)
    assert model.coef[0] == pytest.approx(2.0, abs=0.2)


def test_single_feature_matches_lp_oracle():
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(120):
        k = int(rng.integers(5, 250))
        x = rng.normal(size=(k, 1)) ** 2
        y = rng.uniform(-2, 2) * x[:, 0] + rng.normal(size=k) * rng.uniform(0.1, 3)
        beta = float(rng.uniform(0.03, 0.97))
        fast = fit_linear_quantile(x, y, beta)
        a_lp, w_lp = _fit_lp(x, y, beta)
        r_fast = pinball_risk(fast.intercept, fast.coef, x, y, beta)
        r_lp = pinball_risk(a_lp, w_lp, x, y, beta)
        worst = max(worst, (r_fast - r_lp) / max(r_lp, 1e-12))
    assert worst <= 1e-9


def test_slope_bracket_hint_cannot_change_answer():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(80, 1))
    y = 1.5 * x[:, 0] + rng.normal(size=80)
    base = fit_linear_quantile(x, y, 0.9)
    for hint in ((-100.0, -99.0), (50.0, 60.0), (1.4, 1.6)):
        hinted = fit_linear_quantile(x, y, 0.9, slope_bracket=hint)
        r0 = pinball_risk(base.intercept, base.coef, x, y, 0.9)
        r1 = pinball_risk(hinted.intercept, hinted.coef, x, y, 0.9)
        assert r1 == pytest.approx(r0, rel=1e-9, abs=1e-12)


def test_nested_model_dominance():
    rng = np.random.default_rng(6)
    for m in (1, 2, 4):
        for _ in range(20):
            k = int(rng.integers(m + 3, 120))
            x = rng.normal(size=(k, m))
            y = rng.normal(size=k) + 0.5 * x.sum(axis=1)
            for beta in (0.05, 0.5, 0.95):
                fit = fit_linear_quantile(x, y, beta)
                affine_risk = pinball_risk(fit.intercept, fit.coef, x, y, beta)
                q = empirical_quantile(y, beta)
                intercept_risk = pinball_risk(q, np.zeros(m), x, y, beta)
                assert affine_risk <= intercept_risk + 1e-10


def test_scaling_equivariance():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(60, 2))
    y = x @ np.array([1.0, -0.5]) + rng.normal(size=60)
    probe = rng.normal(size=(5, 2))
    for c in (3.0, 0.25, 1e6):
        base = fit_linear_quantile(x, y, 0.9)
        scaled = fit_linear_quantile(x, c * y, 0.9)
        assert np.allclose(scaled.predict(probe), c * base.predict(probe), rtol=1e-6)


def test_degenerate_constant_column_flagged_but_solvable():
    rng = np.random.default_rng(8)
    x = np.hstack([np.full((40, 1), 2.0), rng.normal(size=(40, 1))])
    y = rng.normal(size=40)
    with pytest.warns(RuntimeWarning, match="constant feature"):
        model = fit_linear_quantile(x, y, 0.5)
    assert model.degenerate
    with pytest.warns(RuntimeWarning):
        m1 = fit_linear_quantile(np.full((30, 1), 1.5), rng.normal(size=30), 0.5)
    assert m1.coef[0] == 0.0


def test_fit_rejections():
    with pytest.raises(ValueError, match="K >= m \\+ 2"):
        fit_linear_quantile(np.zeros((2, 1)), np.zeros(2), 0.5)
    with pytest.raises(ValueError):
        fit_linear_quantile(np.array([[np.nan]] * 5), np.zeros(5), 0.5)
    with pytest.raises(ValueError):
        fit_linear_quantile(np.zeros((5, 1)), np.zeros(5), 1.5)


def test_lp_path_matches_scipy_reference_on_multifeature():
    # 2-feature problems against the same LP with dense manual assembly
    rng = np.random.default_rng(9)
    x = rng.normal(size=(90, 2))
    y = x @ np.array([2.0, -1.0]) + rng.standard_t(3, size=90)
    for beta in (0.1, 0.5, 0.9):
        model = fit_linear_quantile(x, y, beta)
        risk = pinball_risk(model.intercept, model.coef, x, y, beta)
        # perturbing the solution can only raise the risk
        for _ in range(25):
            da, dw = rng.normal() * 0.01, rng.normal(size=2) * 0.01
            worse = pinball_risk(model.intercept + da, model.coef + dw, x, y, beta)
            assert worse >= risk - 1e-9


@given(
    st.lists(
        st.tuples(
            st.sampled_from([-2.0, -1.0, 0.0, 1.0, 2.0, 1e6, 1e-6, 3.7]),
            st.sampled_from([-1.0, 0.0, 1.0, 5.0, -5.0, 1e7, 1e-7]),
        ),
        min_size=4,
        max_size=60,
    ),
    st.sampled_from(LEVELS),
)
@settings(max_examples=150, deadline=None)
def test_single_feature_never_beaten_by_lp_on_tied_data(data, beta):
    x = np.array([d[0] for d in data])[:, None]
    y = np.array([d[1] for d in data])
    if np.max(x) == np.min(x):
        return  # degenerate designs are handled by the constant-column path
    import warnings as w

    with w.catch_warnings():
        w.simplefilter("ignore")
        fast = fit_linear_quantile(x, y, beta)
    a_lp, w_lp = _fit_lp(x, y, beta)
    r_fast = pinball_risk(fast.intercept, fast.coef, x, y, beta)
    r_lp = pinball_risk(a_lp, w_lp, x, y, beta)
    # the absolute floor covers float assembly noise on zero-risk
    # (interpolation) instances, which scales with the data magnitude
    assert r_fast <= r_lp + 1e-9 * r_lp + 1e-12 * (1.0 + float(np.max(np.abs(y))))
