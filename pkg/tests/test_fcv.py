import math

import numpy as np
import pytest

from erruq import (
    SQUARED,
    AutocovarianceError,
    FcvConfig,
    FoldErrors,
    RidgeForecaster,
    RidgeSpec,
    SimSpec,
    build_fold_layout,
    fcv_fold_errors,
    fcv_interval,
    fcv_point,
    fcv_se,
    inv_normal_cdf,
    sample_autocov,
    simulate_linear,
)
from erruq.fcv import default_k_trun


def test_point_examples():
    assert fcv_point(FoldErrors([1.0, 2.0, 3.0])) == pytest.approx(2.0)
    assert fcv_point(FoldErrors(np.full(7, 5.5))) == pytest.approx(5.5)
    with pytest.raises(ValueError):
        FoldErrors([])


def test_sample_autocov_hand_examples():
    e = FoldErrors([1.0, 2.0, 3.0])
    assert sample_autocov(e, 0) == pytest.approx(2.0 / 3.0, rel=1e-12)
    assert sample_autocov(e, 1) == pytest.approx(0.0, abs=1e-15)
    const = FoldErrors(np.full(9, 2.2))
    for s in range(9):
        assert sample_autocov(const, s) == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(ValueError):
        sample_autocov(e, 3)
    with pytest.raises(ValueError):
        sample_autocov(e, -1)


def _brute_autocov(values, s):
    k = len(values)
    mean = sum(values) / k
    acc = 0.0
    for i in range(k - s):
        acc += (values[i] - mean) * (values[i + s] - mean)
    return acc / (k - s)


def test_sample_autocov_matches_double_loop_oracle():
    rng = np.random.default_rng(0)
    for _ in range(50):
        k = int(rng.integers(2, 51))
        vals = rng.normal(size=k) * rng.uniform(0.1, 10)
        e = FoldErrors(vals)
        for s in range(k):
            assert sample_autocov(e, s) == pytest.approx(
                _brute_autocov(vals.tolist(), s), abs=1e-12, rel=1e-12
            )


def test_naive_se_hand_example():
    e = FoldErrors([1.0, 2.0, 3.0])
    expected = math.sqrt(2.0 / 3.0) / math.sqrt(3.0)
    assert fcv_se(e, FcvConfig("naive")) == pytest.approx(expected, rel=1e-12)
    assert fcv_se(e, FcvConfig("naive")) == pytest.approx(0.4714, abs=5e-5)


def test_scaling_identity_exact():
    rng = np.random.default_rng(1)
    for _ in range(20):
        e = FoldErrors(rng.normal(size=rng.integers(2, 200)))
        naive = fcv_se(e, FcvConfig("naive"))
        scaling = fcv_se(e, FcvConfig("scaling"))
        assert scaling == math.sqrt(e.k) * naive  # bitwise identity


def test_autocov_truncation_zero_reduces_to_naive_exact():
    rng = np.random.default_rng(2)
    for _ in range(20):
        e = FoldErrors(rng.normal(size=rng.integers(2, 200)))
        assert fcv_se(e, FcvConfig("autocov", k_trun=0)) == fcv_se(e, FcvConfig("naive"))


def test_autocov_negative_radicand_raises():
    e = FoldErrors(np.tile([1.0, -1.0], 10))
    with pytest.raises(AutocovarianceError) as exc:
        fcv_se(e, FcvConfig("autocov", k_trun=1))
    assert exc.value.radicand < 0


def test_default_k_trun():
    assert default_k_trun(27) == 3
    assert default_k_trun(28) == 4
    assert default_k_trun(2) == 1
    e = FoldErrors(np.arange(64, dtype=float))
    cfg = FcvConfig("autocov")  # default lag = ceil(64^(1/3)) = 4
    manual = FcvConfig("autocov", k_trun=4)
    assert fcv_se(e, cfg) == fcv_se(e, manual)


def test_interval_composition_example():
    e = FoldErrors([1.0, 2.0, 3.0])
    rec = fcv_interval(e, FcvConfig("naive", alpha=0.1), t=3)
    z = inv_normal_cdf(0.95)
    se = math.sqrt(2.0 / 3.0) / math.sqrt(3.0)
    assert rec.lo == pytest.approx(2.0 - z * se, rel=1e-12)
    assert rec.hi == pytest.approx(2.0 + z * se, rel=1e-12)
    assert rec.method == "fcv" and rec.alpha == 0.1 and rec.t == 3


def test_interval_zero_variance_degenerates():
    # 3.3 is not exactly representable, so the sample variance is ~1e-31
    # rather than 0; the interval still collapses to [c, c] at 1e-12
    e = FoldErrors(np.full(12, 3.3))
    for variant in ("naive", "autocov", "scaling"):
        rec = fcv_interval(e, FcvConfig(variant))
        assert rec.lo == pytest.approx(3.3, abs=1e-12)
        assert rec.hi == pytest.approx(3.3, abs=1e-12)
        assert rec.hi - rec.lo <= 1e-12


def test_interval_symmetric_about_point():
    rng = np.random.default_rng(3)
    for variant in ("naive", "autocov", "scaling"):
        e = FoldErrors(rng.exponential(size=50))
        rec = fcv_interval(e, FcvConfig(variant))
        mid = 0.5 * (rec.lo + rec.hi)
        assert mid == pytest.approx(fcv_point(e), abs=1e-12)


def test_method_tags():
    e = FoldErrors(np.arange(10, dtype=float))
    assert fcv_interval(e, FcvConfig("autocov")).method == "fcv_c"
    assert fcv_interval(e, FcvConfig("scaling")).method == "fcv_p"


def test_config_validation():
    with pytest.raises(ValueError):
        FcvConfig("bogus")
    with pytest.raises(ValueError):
        FcvConfig("naive", alpha=1.2)
    e = FoldErrors(np.arange(5, dtype=float))
    with pytest.raises(ValueError):
        fcv_se(e, FcvConfig("autocov", k_trun=5))
    with pytest.raises(ValueError):
        fcv_se(FoldErrors([1.0]), FcvConfig("naive"))


def test_fold_errors_from_pipeline():
    spec = SimSpec(n=200, p=2, beta=(1.0, 0.0), seed=9)
    series = simulate_linear(spec)
    layout = build_fold_layout(200, 20, 5, 5, 2)
    e = fcv_fold_errors(series, layout, RidgeForecaster(RidgeSpec(lam=1.0)), SQUARED)
    assert e.k == layout.K
    assert np.all(e.values >= 0)
