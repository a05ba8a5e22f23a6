"""Replication engine: runs seeded replicated experiments, computes
coverage/length/MSE metrics against Monte-Carlo oracles, and drives the
rolling-interval comparisons.

Replication r draws from stream r of the base seed; oracle draws live in a
disjoint stream block. Results are therefore identical for any worker count.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace

import numpy as np
from joblib import Parallel, delayed

from .acidf import AqfcvConstructor, RollingConfig, make_rolling_err, run_acidf
from .core import IntervalRecord, LossFn, build_fold_layout
from .fcv import FcvConfig, FoldErrors, fcv_interval, fcv_point
from .forecasters import predict_batch
from .qfcv import ErrPairs, _aggregate_aux, fold_losses, qfcv_interval, star_test_error
from .quantreg import empirical_quantile
from .sim import SimSpec, simulate_linear

__all__ = [
    "ORACLE_STREAM_BASE",
    "OracleQuantiles",
    "MetricRow",
    "ExperimentSpec",
    "oracle_quantiles",
    "run_experiment",
    "mse_point",
    "RollingExperimentResult",
    "run_rolling_experiment",
]

ORACLE_STREAM_BASE = 2**32  # replication streams are 0..n_reps-1


@dataclass(frozen=True)
class OracleQuantiles:
    """Monte-Carlo description of the true stochastic-error distribution:
    the alpha/2 and 1-alpha/2 quantiles (5%/95% at the default level) and
    the mean (the expected test error)."""

    q05: float
    q95: float
    mc_err: float
    draws: int
    se_mc_err: float

    def __post_init__(self):
        if self.q05 > self.q95:
            raise ValueError("oracle quantiles out of order")

    @property
    def width(self) -> float:
        return self.q95 - self.q05

    def interval(self, t: int = 0, alpha: float = 0.1) -> IntervalRecord:
        return IntervalRecord(self.q05, self.q95, "oracle", alpha, t)


@dataclass(frozen=True)
class MetricRow:
    method: str
    sweep_value: float
    n_reps: int
    coverage_sto: float
    coverage_err: float
    miscover_hi: float
    miscover_lo: float
    mean_length: float
    length_ratio: float
    mse_point: float
    se_coverage_sto: float
    se_coverage_err: float
    se_mean_length: float
    se_length_ratio: float
    se_mse_point: float

    FIELDS = (
        "method,sweep_value,n_reps,coverage_sto,coverage_err,miscover_hi,miscover_lo,"
        "mean_length,length_ratio,mse_point,se_coverage_sto,se_coverage_err,"
        "se_mean_length,se_length_ratio,se_mse_point"
    )


DEFAULT_PHI_GRID = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95)


@dataclass(frozen=True)
class ExperimentSpec:
    sim: SimSpec
    forecaster: object
    loss: LossFn
    n_tr: int
    n_val: int
    n_te: int
    delta: int = 1
    alpha: float = 0.1
    methods: tuple[str, ...] = ("qfcv1", "fcv")
    n_reps: int = 500
    oracle_draws: int = 2000
    workers: int = 1
    sweep_value: float = float("nan")
    phi_sweep: tuple[float, ...] = ()  # AR(1)-coefficient grid; empty = single run

    def __post_init__(self):
        if self.n_reps < 1:
            raise ValueError("replication count must be >= 1")
        for name in self.methods:
            _parse_method(name)  # fail fast on unknown tags


_QFCV_RE = re.compile(r"^qfcv(\d*)$")


def _parse_method(name: str):
    m = _QFCV_RE.match(name)
    if m:
        return ("qfcv", int(m.group(1)) if m.group(1) else 1)
    if name in ("fcv", "fcv_c", "fcv_p"):
        return ("fcv", {"fcv": "naive", "fcv_c": "autocov", "fcv_p": "scaling"}[name])
    if name == "oracle":
        return ("oracle", None)
    raise ValueError(f"unknown method tag {name!r}")


def mse_point(estimates, realized) -> float:
    """Mean squared difference between point estimates and realized errors."""
    a = np.asarray(estimates, dtype=float)
    b = np.asarray(realized, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def oracle_quantiles(
    sim: SimSpec,
    forecaster,
    loss: LossFn,
    n_tr: int,
    n_te: int,
    draws: int,
    alpha: float = 0.1,
    chunk: int = 200,
) -> OracleQuantiles:
    """Simulate independent instances, compute the realized stochastic error
    of each (model fit on the last n_tr of z_{1:n}, loss over the next n_te),
    and summarize the empirical distribution."""
    if draws < 100:
        raise ValueError("oracle needs at least 100 draws")
    errs = np.empty(draws)
    batched = hasattr(forecaster, "fit_batch")
    for start in range(0, draws, chunk):
        stop = min(start + chunk, draws)
        xs_tr, ys_tr, xs_te, ys_te = [], [], [], []
        for j in range(start, stop):
            series = simulate_linear(sim, n_extra=n_te, stream=ORACLE_STREAM_BASE + j)
            xs_tr.append(series.x[sim.n - n_tr : sim.n])
            ys_tr.append(series.y[sim.n - n_tr : sim.n])
            xs_te.append(series.x[sim.n :])
            ys_te.append(series.y[sim.n :])
        xs_te = np.stack(xs_te)
        ys_te = np.stack(ys_te)
        if batched:
            w, b = forecaster.fit_batch(np.stack(xs_tr), np.stack(ys_tr))
            losses = np.asarray(loss(predict_batch(w, b, xs_te), ys_te), dtype=float)
            errs[start:stop] = losses.mean(axis=1)
        else:
            for row, j in enumerate(range(start, stop)):
                model = forecaster.fit(xs_tr[row], ys_tr[row])
                errs[start + row] = np.mean(loss(model.predict(xs_te[row]), ys_te[row]))
    return OracleQuantiles(
        q05=empirical_quantile(errs, alpha / 2),
        q95=empirical_quantile(errs, 1 - alpha / 2),
        mc_err=float(np.mean(errs)),
        draws=draws,
        se_mc_err=float(np.std(errs, ddof=1) / np.sqrt(draws)),
    )


def _one_replication(spec: ExperimentSpec, rep: int, oracle: OracleQuantiles) -> dict:
    series = simulate_linear(spec.sim, n_extra=spec.n_te, stream=rep)
    layout = build_fold_layout(spec.sim.n, spec.n_tr, spec.n_val, spec.n_te, spec.delta)
    data = fold_losses(series.head(spec.sim.n), layout, spec.forecaster, spec.loss)
    err_sto = star_test_error(series, layout, spec.forecaster, spec.loss)
    out: dict = {"err_sto": err_sto}
    for name in spec.methods:
        kind, arg = _parse_method(name)
        if kind == "qfcv":
            pairs = ErrPairs(_aggregate_aux(data.val_loss, arg), data.test_err, arg)
            star = _aggregate_aux(data.star_val_loss, arg)
            res = qfcv_interval(
                pairs, star, spec.alpha, clamp_nonnegative=spec.loss.nonnegative, t=spec.sim.n
            )
            out[name] = (res.interval.lo, res.interval.hi, res.point)
        elif kind == "fcv":
            e = FoldErrors(data.val_loss.mean(axis=1))
            rec = fcv_interval(e, FcvConfig(variant=arg, alpha=spec.alpha), t=spec.sim.n)
            out[name] = (rec.lo, rec.hi, fcv_point(e))
        else:  # oracle self-test
            out[name] = (oracle.q05, oracle.q95, oracle.mc_err)
    return out


def _rep_chunks(n_reps: int, workers: int) -> list[range]:
    if workers <= 1:
        return [range(n_reps)]
    per = max(1, -(-n_reps // (workers * 4)))
    return [range(s, min(s + per, n_reps)) for s in range(0, n_reps, per)]


def run_experiment(spec: ExperimentSpec) -> tuple[list[MetricRow], dict]:
    """Replicate the experiment and aggregate per-method metrics.

    Returns the metric rows plus the raw per-replication table
    {method: (lo, hi, point) arrays, "err_sto": array, "oracle": quantiles,
    "failures": [(rep, message), ...]}. A failing replication is recorded
    and skipped; metrics aggregate the survivors. With ``phi_sweep`` set,
    the experiment repeats per AR(1) coefficient and the rows concatenate.
    """
    if spec.phi_sweep:
        if not hasattr(spec.sim.noise, "phi"):
            raise TypeError("phi_sweep requires ARMA noise")
        all_rows: list[MetricRow] = []
        raw: dict = {"sweep": {}}
        for phi in spec.phi_sweep:
            sub = replace(
                spec,
                sim=replace(spec.sim, noise=replace(spec.sim.noise, phi=(phi,))),
                phi_sweep=(),
                sweep_value=float(phi),
            )
            rows, sub_raw = run_experiment(sub)
            all_rows.extend(rows)
            raw["sweep"][float(phi)] = sub_raw
        raw["failures"] = [f for r in raw["sweep"].values() for f in r["failures"]]
        return all_rows, raw

    oracle = oracle_quantiles(
        spec.sim, spec.forecaster, spec.loss, spec.n_tr, spec.n_te,
        spec.oracle_draws, spec.alpha,
    )
    chunks = _rep_chunks(spec.n_reps, spec.workers)
    if len(chunks) == 1:
        results = [_safe_replication(spec, r, oracle) for r in chunks[0]]
    else:
        parts = Parallel(n_jobs=spec.workers)(
            delayed(_run_chunk)(spec, chunk, oracle) for chunk in chunks
        )
        results = [rec for part in parts for rec in part]

    failures = [(rep, msg) for rep, msg in
                ((r["rep"], r.get("error")) for r in results) if msg]
    ok = [r for r in results if "error" not in r]
    if not ok:
        raise RuntimeError(
            f"all {spec.n_reps} replications failed; first error: {failures[0][1]}"
        )
    err_sto = np.array([r["err_sto"] for r in ok])
    raw = {"err_sto": err_sto, "oracle": oracle, "failures": failures}
    rows = []
    for name in spec.methods:
        lo = np.array([r[name][0] for r in ok])
        hi = np.array([r[name][1] for r in ok])
        point = np.array([r[name][2] for r in ok])
        raw[name] = (lo, hi, point)
        rows.append(_metric_row(spec, name, lo, hi, point, err_sto, oracle))
    return rows, raw


def _safe_replication(spec, rep, oracle):
    try:
        out = _one_replication(spec, rep, oracle)
        out["rep"] = rep
        return out
    except Exception as exc:
        return {"rep": rep, "error": f"{type(exc).__name__}: {exc}"}


def _run_chunk(spec, chunk, oracle):
    return [_safe_replication(spec, r, oracle) for r in chunk]


def _metric_row(spec, name, lo, hi, point, err_sto, oracle) -> MetricRow:
    n = err_sto.shape[0]
    above = err_sto > hi
    below = err_sto < lo
    cov_sto = 1.0 - above.mean() - below.mean()
    cov_err = float(np.mean((lo <= oracle.mc_err) & (oracle.mc_err <= hi)))
    lengths = hi - lo
    sq = (point - err_sto) ** 2
    mse = float(np.mean(sq))

    def binom_se(p):
        return float(np.sqrt(max(p * (1 - p), 0.0) / n))

    def mean_se(v):
        return float(np.std(v, ddof=1) / np.sqrt(n)) if n > 1 else float("nan")

    return MetricRow(
        method=name,
        sweep_value=spec.sweep_value,
        n_reps=n,
        coverage_sto=float(cov_sto),
        coverage_err=cov_err,
        miscover_hi=float(above.mean()),
        miscover_lo=float(below.mean()),
        mean_length=float(np.mean(lengths)),
        length_ratio=float(np.mean(lengths) / oracle.width),
        mse_point=mse,
        se_coverage_sto=binom_se(cov_sto),
        se_coverage_err=binom_se(cov_err),
        se_mean_length=mean_se(lengths),
        se_length_ratio=mean_se(lengths) / oracle.width,
        se_mse_point=mean_se(sq),
    )


# ---------------------------------------------------------------------------
# Rolling-interval experiments (AQFCV vs plain rolling QFCV)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RollingExperimentResult:
    t: np.ndarray  # issue grid (J,)
    aqfcv_covered: np.ndarray  # (n_instances, J)
    qfcv_covered: np.ndarray  # (n_instances, J)

    def time_avg(self, method: str = "aqfcv") -> np.ndarray:
        mat = self.aqfcv_covered if method == "aqfcv" else self.qfcv_covered
        return mat.mean(axis=1)

    def instance_avg(self, method: str = "aqfcv") -> np.ndarray:
        mat = self.aqfcv_covered if method == "aqfcv" else self.qfcv_covered
        return mat.mean(axis=0)


def _rolling_instance(sim: SimSpec, forecaster, loss, config: RollingConfig, stream: int):
    t_max = config.t_max if config.t_max is not None else sim.n
    series = simulate_linear(sim, stream=stream)
    constructor = AqfcvConstructor(
        series, forecaster, loss,
        alpha=config.alpha, n_tr=config.n_tr, n_val=config.n_val, n_te=config.n_te,
        qfcv_delta=config.qfcv_delta, aux_m=config.aux_m, min_folds=config.min_folds,
    )
    err = make_rolling_err(series, forecaster, loss, config.n_tr, config.n_te)
    common = dict(
        alpha=config.alpha, delta=config.delta, n_te=config.n_te,
        first_issue=config.resolved_first_issue(), t_max=t_max,
    )
    run_a = run_acidf(constructor, err, gamma=config.gamma, **common)
    run_q = run_acidf(constructor, err, gamma=0.0, **common)
    return run_a.t, run_a.covered.astype(np.uint8), run_q.covered.astype(np.uint8)


def run_rolling_experiment(
    sim: SimSpec,
    forecaster,
    loss: LossFn,
    config: RollingConfig,
    n_instances: int,
    workers: int = 1,
) -> RollingExperimentResult:
    """Replicate the AQFCV and plain rolling-QFCV runs over independent
    instances; the two runs of each instance share one fold cache."""
    streams = list(range(n_instances))
    if workers <= 1:
        parts = [_rolling_instance(sim, forecaster, loss, config, s) for s in streams]
    else:
        parts = Parallel(n_jobs=workers)(
            delayed(_rolling_instance)(sim, forecaster, loss, config, s) for s in streams
        )
    t = parts[0][0]
    return RollingExperimentResult(
        t=t,
        aqfcv_covered=np.stack([p[1] for p in parts]),
        qfcv_covered=np.stack([p[2] for p in parts]),
    )
