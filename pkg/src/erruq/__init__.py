"""Uncertainty intervals for time-series forecast errors.

Quantile-based forward cross-validation (QFCV) prediction intervals,
CLT-based forward cross-validation (FCV) confidence/prediction intervals,
adaptive rolling intervals with delayed feedback (ACI-DF / AQFCV), and a
seeded simulation and evaluation harness.
"""

from .core import (
    ABSOLUTE,
    SQUARED,
    FoldLayout,
    IntervalRecord,
    LossFn,
    TimePoint,
    TimeSeries,
    WindowScheme,
    build_fold_layout,
    get_loss,
    stochastic_test_error,
)
from .sim import (
    ArmaSpec,
    NonstationarySpec,
    RngStream,
    SimSpec,
    gen_arma,
    gen_nonstationary,
    paper_beta,
    simulate_garch_series,
    simulate_linear,
    wedge_theta,
)
from .forecasters import (
    Garch11Model,
    GarchForecaster,
    LassoForecaster,
    LassoSpec,
    LinearModel,
    RidgeForecaster,
    RidgeSpec,
    fit_garch11,
    fit_lasso,
    fit_ridge,
    garch_multiperiod_forecast,
)
from .quantreg import (
    LinearQuantileModel,
    empirical_quantile,
    fit_linear_quantile,
    inv_normal_cdf,
    pinball,
    pinball_risk,
)
from .qfcv import (
    AuxSpec,
    ErrPair,
    ErrPairs,
    QfcvConfig,
    QfcvOutput,
    aux_features,
    compute_err_pairs,
    qfcv_interval,
    qfcv_point,
    run_qfcv,
    star_test_error,
)
from .fcv import (
    AutocovarianceError,
    FcvConfig,
    FoldErrors,
    fcv_fold_errors,
    fcv_interval,
    fcv_point,
    fcv_se,
    sample_autocov,
)
from .acidf import (
    AciState,
    AqfcvConstructor,
    RollingConfig,
    RollingRun,
    aci_step,
    instance_avg_coverage,
    make_rolling_err,
    run_acidf,
    run_aqfcv,
    time_avg_coverage,
)
from .evalharness import (
    ExperimentSpec,
    MetricRow,
    OracleQuantiles,
    mse_point,
    oracle_quantiles,
    run_experiment,
    run_rolling_experiment,
)

__version__ = "0.1.0"
