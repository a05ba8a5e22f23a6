"""Command-line front end.

Configuration lives in a flat key-path file: one ``key = value`` per line,
values in JSON notation (numbers, strings, booleans, lists), full-line
comments starting with ``#``. Flags override file values. Every output file
starts with a comment block echoing the fully resolved configuration, and
numbers are written in shortest round-trip decimal form.

Exit codes: 0 success, 1 validation error, 2 runtime/numerical error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .acidf import RollingConfig, run_aqfcv
from .core import TimeSeries, build_fold_layout, get_loss
from .evalharness import ExperimentSpec, MetricRow, run_experiment
from .fcv import FcvConfig, fcv_fold_errors, fcv_interval, fcv_point
from .forecasters import (
    GarchForecaster,
    LassoForecaster,
    LassoSpec,
    RidgeForecaster,
    RidgeSpec,
)
from .qfcv import AuxSpec, QfcvConfig, run_qfcv
from .sim import (
    ArmaSpec,
    NonstationarySpec,
    RngStream,
    SimSpec,
    paper_beta,
    simulate_garch_series,
    simulate_linear,
    wedge_theta,
)

TASKS = ("simulate", "qfcv", "fcv", "aqfcv", "evaluate")


class ConfigError(ValueError):
    """Invalid configuration or input data; maps to exit code 1."""


def fmt(v) -> str:
    """Shortest round-trip decimal representation."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


# ---------------------------------------------------------------------------
# configuration schema
# ---------------------------------------------------------------------------


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return _is_int(v) or isinstance(v, float)


def _is_str_list(v):
    return isinstance(v, list) and all(isinstance(s, str) for s in v)


def _is_num_list(v):
    return isinstance(v, list) and all(_is_num(s) for s in v)


@dataclass(frozen=True)
class _Key:
    default: object
    check: callable
    hint: str


_SCHEMA: dict[str, _Key] = {
    "task": _Key(None, lambda v: v in TASKS, f"one of {TASKS}"),
    "seed": _Key(0, lambda v: _is_int(v) and 0 <= v < 2**64, "unsigned 64-bit integer"),
    "workers": _Key(1, lambda v: _is_int(v) and v >= 1, "integer >= 1"),
    "output": _Key("", lambda v: isinstance(v, str), "string path"),
    "input": _Key("", lambda v: isinstance(v, str), "string path"),
    "alpha": _Key(0.1, lambda v: _is_num(v) and 0 < v < 1, "real in (0, 1)"),
    "loss": _Key("squared", lambda v: v in ("squared", "absolute"), "squared|absolute"),
    "replications": _Key(500, lambda v: _is_int(v) and v >= 1, "integer >= 1"),
    "oracle_draws": _Key(2000, lambda v: _is_int(v) and v >= 100, "integer >= 100"),
    "methods": _Key(["qfcv1", "fcv"], _is_str_list, "list of method tags"),
    "sweep.phi": _Key([], _is_num_list, "AR(1) coefficient grid (empty = no sweep)"),
    "sim.kind": _Key(
        "linear-arma",
        lambda v: v in ("linear-arma", "linear-nonstat", "garch"),
        "linear-arma|linear-nonstat|garch",
    ),
    "sim.n": _Key(2000, lambda v: _is_int(v) and v >= 1, "integer >= 1"),
    "sim.p": _Key(20, lambda v: _is_int(v) and v >= 0, "integer >= 0"),
    "sim.beta_ones": _Key(4, lambda v: _is_int(v) and v >= 0, "integer >= 0"),
    "sim.beta": _Key([], _is_num_list, "list of reals (overrides beta_ones)"),
    "sim.phi": _Key([0.5], _is_num_list, "list of AR coefficients"),
    "sim.theta": _Key(
        [], lambda v: v == "wedge" or _is_num_list(v), 'list of MA coefficients or "wedge"'
    ),
    "sim.noise_scale": _Key(1.0, lambda v: _is_num(v) and v >= 0, "real >= 0"),
    "sim.innovation_sd": _Key(1.0, lambda v: _is_num(v) and v > 0, "real > 0"),
    "sim.burn_in": _Key(500, lambda v: _is_int(v) and v >= 0, "integer >= 0"),
    "sim.nonstat.arima_phi": _Key(0.99, _is_num, "real"),
    "sim.nonstat.exponent": _Key(4.0, lambda v: _is_num(v) and v >= 0, "real >= 0"),
    "sim.garch.omega": _Key(0.1, lambda v: _is_num(v) and v > 0, "real > 0"),
    "sim.garch.tau": _Key(0.1, lambda v: _is_num(v) and v >= 0, "real >= 0"),
    "sim.garch.beta": _Key(0.8, lambda v: _is_num(v) and v >= 0, "real >= 0"),
    "layout.n_tr": _Key(40, lambda v: _is_int(v) and v >= 1, "integer >= 1"),
    "layout.n_val": _Key(5, lambda v: _is_int(v) and v >= 1, "integer >= 1"),
    "layout.n_te": _Key(5, lambda v: _is_int(v) and v >= 1, "integer >= 1"),
    "layout.delta": _Key(1, lambda v: _is_int(v) and v >= 1, "integer >= 1"),
    "qfcv.m": _Key(1, lambda v: _is_int(v) and v >= 0, "integer >= 0"),
    "qfcv.memory_span": _Key(1, lambda v: _is_int(v) and v >= 1, "integer >= 1"),
    "qfcv.scheme": _Key("rolling", lambda v: v in ("rolling", "expanding"), "rolling|expanding"),
    "fcv.variants": _Key(
        ["naive", "autocov", "scaling"],
        lambda v: _is_str_list(v) and all(s in ("naive", "autocov", "scaling") for s in v),
        "subset of naive|autocov|scaling",
    ),
    "fcv.k_trun": _Key(-1, lambda v: _is_int(v) and v >= -1, "integer >= 0, or -1 for default"),
    "forecaster.kind": _Key(
        "lasso", lambda v: v in ("ridge", "lasso", "garch"), "ridge|lasso|garch"
    ),
    "forecaster.lam": _Key(
        -1.0, lambda v: _is_num(v) and (v >= 0 or v == -1.0), "real >= 0, or -1 for the default rule"
    ),
    "forecaster.lam_frac": _Key(0.1, lambda v: _is_num(v) and v >= 0, "real >= 0"),
    "forecaster.include_intercept": _Key(False, lambda v: isinstance(v, bool), "boolean"),
    "rolling.gamma": _Key(0.01, lambda v: _is_num(v) and v >= 0, "real >= 0"),
    "rolling.delta": _Key(5, lambda v: _is_int(v) and v >= 1, "integer >= 1"),
    "rolling.first_issue": _Key(-1, lambda v: _is_int(v), "integer >= 1, or -1 for auto"),
    "rolling.t_max": _Key(-1, lambda v: _is_int(v), "integer >= 1, or -1 for series length"),
    "rolling.qfcv_delta": _Key(1, lambda v: _is_int(v) and v >= 1, "integer >= 1"),
    "rolling.aux_m": _Key(1, lambda v: _is_int(v) and v >= 0, "integer >= 0"),
    "rolling.min_folds": _Key(20, lambda v: _is_int(v) and v >= 3, "integer >= 3"),
}

_KEY_ORDER = list(_SCHEMA)


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse flat ``key = value`` lines with JSON-typed values."""
    values: dict[str, object] = {}
    problems: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            problems.append(f"{source}:{lineno}: expected 'key = value', got {line!r}")
            continue
        key, _, rhs = line.partition("=")
        key = key.strip()
        try:
            value = json.loads(rhs.strip())
        except json.JSONDecodeError:
            problems.append(f"{source}:{lineno}: value for {key!r} is not valid JSON: {rhs.strip()!r}")
            continue
        if key in values:
            problems.append(f"{source}:{lineno}: duplicate key {key!r}")
            continue
        values[key] = value
    if problems:
        raise ConfigError("\n".join(problems))
    return values


def resolve_config(values: dict, task: str | None = None) -> dict:
    """Validate against the schema, fill every default, and return the fully
    resolved flat mapping. All violations are reported together."""
    problems = []
    for key in values:
        if key not in _SCHEMA:
            problems.append(f"unknown key {key!r}")
    merged = dict(values)
    if task is not None:
        merged["task"] = task
    for key, spec in _SCHEMA.items():
        if key not in merged:
            merged[key] = spec.default
    if merged.get("task") is None:
        problems.append("missing required key 'task' (or pass a subcommand)")
    for key, spec in _SCHEMA.items():
        v = merged.get(key)
        if key == "task" and v is None:
            continue
        if not spec.check(v):
            problems.append(f"{key} = {v!r} is out of range (expected {spec.hint})")
    if problems:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(problems))
    return {k: merged[k] for k in _KEY_ORDER}


def parse_config(path: str | Path | None, overrides: list[str] = (), task: str | None = None) -> dict:
    """Read, override, validate, and resolve a configuration."""
    values = {}
    if path:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        values = parse_config_text(p.read_text(), str(p))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, rhs = item.partition("=")
        try:
            values[key.strip()] = json.loads(rhs.strip())
        except json.JSONDecodeError:
            raise ConfigError(f"--set value for {key.strip()!r} is not valid JSON: {rhs!r}") from None
    return resolve_config(values, task=task)


def emit_config(config: dict) -> str:
    """Resolved config in the same flat format (a parse fixed point)."""
    lines = []
    for key in _KEY_ORDER:
        lines.append(f"{key} = {json.dumps(config[key])}")
    return "\n".join(lines) + "\n"


def _provenance_block(config: dict) -> str:
    body = emit_config(config)
    return "".join(f"# {line}\n" for line in body.splitlines())


# ---------------------------------------------------------------------------
# CSV input/output
# ---------------------------------------------------------------------------


def ingest_csv(path: str | Path) -> TimeSeries:
    """Read ``t,x1,...,xp,y`` rows (strictly increasing integer t) into a
    series; leading '#' comment lines are skipped."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"input file not found: {p}")
    lines = p.read_text().splitlines()
    rows: list[list[float]] = []
    header: list[str] | None = None
    prev_t = None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        cells = [c.strip() for c in line.split(",")]
        if header is None:
            header = cells
            p_dim = len(header) - 2
            if p_dim < 1 or header[0] != "t" or header[-1] != "y" or header[1:-1] != [
                f"x{i}" for i in range(1, p_dim + 1)
            ]:
                raise ConfigError(
                    f"{p}:{lineno}: header must be t,x1,...,xp,y; got {','.join(cells)}"
                )
            continue
        if len(cells) != len(header):
            raise ConfigError(
                f"{p}:{lineno}: expected {len(header)} cells, got {len(cells)} (ragged row)"
            )
        try:
            vals = [float(c) for c in cells]
        except ValueError:
            bad = next(c for c in cells if not _is_float(c))
            raise ConfigError(f"{p}:{lineno}: non-numeric cell {bad!r}") from None
        if not all(np.isfinite(vals)):
            raise ConfigError(f"{p}:{lineno}: non-finite value")
        t = vals[0]
        if t != int(t):
            raise ConfigError(f"{p}:{lineno}: t must be an integer, got {cells[0]}")
        if prev_t is not None and t <= prev_t:
            raise ConfigError(f"{p}:{lineno}: t must be strictly increasing")
        prev_t = t
        rows.append(vals[1:])
    if header is None:
        raise ConfigError(f"{p}: empty file (missing header)")
    if not rows:
        raise ConfigError(f"{p}: no data rows")
    arr = np.asarray(rows)
    return TimeSeries(arr[:, :-1], arr[:, -1])


def _is_float(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def emit_series_csv(series: TimeSeries, config: dict) -> str:
    cols = ["t"] + [f"x{i}" for i in range(1, series.p + 1)] + ["y"]
    out = [_provenance_block(config), ",".join(cols), "\n"]
    lines = []
    for i in range(series.n):
        cells = [str(i + 1)] + [fmt(v) for v in series.x[i]] + [fmt(series.y[i])]
        lines.append(",".join(cells))
    return out[0] + out[1] + "\n" + "\n".join(lines) + "\n"


def _write(path: str, text: str) -> None:
    Path(path).write_text(text)


# ---------------------------------------------------------------------------
# task plumbing
# ---------------------------------------------------------------------------


def build_sim_spec(config: dict) -> SimSpec:
    p = config["sim.p"]
    beta = tuple(config["sim.beta"]) if config["sim.beta"] else paper_beta(p, config["sim.beta_ones"])
    kind = config["sim.kind"]
    if kind == "linear-nonstat":
        noise = NonstationarySpec(
            arima_phi=config["sim.nonstat.arima_phi"],
            variance_growth_exponent=config["sim.nonstat.exponent"],
        )
    else:
        theta = config["sim.theta"]
        noise = ArmaSpec(
            phi=tuple(config["sim.phi"]),
            theta=wedge_theta() if theta == "wedge" else tuple(theta),
            innovation_sd=config["sim.innovation_sd"],
            burn_in=config["sim.burn_in"],
        )
    return SimSpec(
        n=config["sim.n"],
        p=p,
        beta=beta,
        noise=noise,
        noise_scale=config["sim.noise_scale"],
        seed=config["seed"],
    )


def build_forecaster(config: dict):
    kind = config["forecaster.kind"]
    lam = config["forecaster.lam"]
    intercept = config["forecaster.include_intercept"]
    if kind == "ridge":
        return RidgeForecaster(RidgeSpec(lam=1.0 if lam == -1.0 else lam, include_intercept=intercept))
    if kind == "lasso":
        return LassoForecaster(
            LassoSpec(
                lam=None if lam == -1.0 else lam,
                lam_frac=config["forecaster.lam_frac"],
                include_intercept=intercept,
            )
        )
    return GarchForecaster()


def _make_series(config: dict, n_extra: int = 0) -> TimeSeries:
    if config["input"]:
        return ingest_csv(config["input"])
    if config["sim.kind"] == "garch":
        return simulate_garch_series(
            config["sim.garch.omega"],
            config["sim.garch.tau"],
            config["sim.garch.beta"],
            config["sim.n"] + n_extra,
            RngStream(config["seed"]),
        )
    return simulate_linear(build_sim_spec(config), n_extra=n_extra)


def _task_simulate(config: dict) -> tuple[str, int]:
    return emit_series_csv(_make_series(config), config), 0


def _task_qfcv(config: dict) -> tuple[str, int]:
    series = _make_series(config)
    cfg = QfcvConfig(
        alpha=config["alpha"],
        n_tr=config["layout.n_tr"],
        n_val=config["layout.n_val"],
        n_te=config["layout.n_te"],
        delta=config["layout.delta"],
        aux=AuxSpec(config["qfcv.m"]),
        memory_span=config["qfcv.memory_span"],
        scheme=config["qfcv.scheme"],
    )
    out = run_qfcv(series, build_forecaster(config), get_loss(config["loss"]), cfg)
    header = "method,alpha,m,memory_span,n,lo,hi,point"
    row = ",".join(
        [
            out.interval.method,
            fmt(config["alpha"]),
            str(config["qfcv.m"]),
            str(config["qfcv.memory_span"]),
            str(series.n),
            fmt(out.interval.lo),
            fmt(out.interval.hi),
            fmt(out.point),
        ]
    )
    return _provenance_block(config) + header + "\n" + row + "\n", 0


def _task_fcv(config: dict) -> tuple[str, int]:
    series = _make_series(config)
    layout = build_fold_layout(
        series.n,
        config["layout.n_tr"],
        config["layout.n_val"],
        config["layout.n_te"],
        config["layout.delta"],
    )
    errors = fcv_fold_errors(series, layout, build_forecaster(config), get_loss(config["loss"]))
    k_trun = None if config["fcv.k_trun"] == -1 else config["fcv.k_trun"]
    lines = ["method,alpha,variant,k,point,lo,hi"]
    for variant in config["fcv.variants"]:
        rec = fcv_interval(errors, FcvConfig(variant, config["alpha"], k_trun), t=series.n)
        lines.append(
            ",".join(
                [
                    rec.method,
                    fmt(config["alpha"]),
                    variant,
                    str(errors.k),
                    fmt(fcv_point(errors)),
                    fmt(rec.lo),
                    fmt(rec.hi),
                ]
            )
        )
    return _provenance_block(config) + "\n".join(lines) + "\n", 0


def _task_aqfcv(config: dict) -> tuple[str, int]:
    series = _make_series(config)
    cfg = RollingConfig(
        alpha=config["alpha"],
        gamma=config["rolling.gamma"],
        delta=config["rolling.delta"],
        n_tr=config["layout.n_tr"],
        n_val=config["layout.n_val"],
        n_te=config["layout.n_te"],
        qfcv_delta=config["rolling.qfcv_delta"],
        aux_m=config["rolling.aux_m"],
        min_folds=config["rolling.min_folds"],
        first_issue=None if config["rolling.first_issue"] == -1 else config["rolling.first_issue"],
        t_max=None if config["rolling.t_max"] == -1 else config["rolling.t_max"],
    )
    run = run_aqfcv(series, build_forecaster(config), get_loss(config["loss"]), cfg)
    lines = ["t,lo,hi,err_sto,covered,theta"]
    for j in range(len(run)):
        lines.append(
            ",".join(
                [
                    str(int(run.t[j])),
                    fmt(run.lo[j]),
                    fmt(run.hi[j]),
                    fmt(run.err_sto[j]),
                    str(int(run.covered[j])),
                    fmt(run.theta[j]),
                ]
            )
        )
    return _provenance_block(config) + "\n".join(lines) + "\n", 0


def _task_evaluate(config: dict) -> tuple[str, int]:
    if config["input"]:
        raise ConfigError("evaluate runs on simulated replications; 'input' is not supported")
    spec = ExperimentSpec(
        sim=build_sim_spec(config),
        forecaster=build_forecaster(config),
        loss=get_loss(config["loss"]),
        n_tr=config["layout.n_tr"],
        n_val=config["layout.n_val"],
        n_te=config["layout.n_te"],
        delta=config["layout.delta"],
        alpha=config["alpha"],
        methods=tuple(config["methods"]),
        n_reps=config["replications"],
        oracle_draws=config["oracle_draws"],
        workers=config["workers"],
        phi_sweep=tuple(config["sweep.phi"]),
    )
    rows, raw = run_experiment(spec)
    failures = raw["failures"]
    lines = [MetricRow.FIELDS]
    for r in rows:
        lines.append(
            ",".join(
                [r.method]
                + [
                    fmt(getattr(r, f))
                    for f in MetricRow.FIELDS.split(",")[1:]
                ]
            )
        )
    head = _provenance_block(config) + f"# replication_failures = {len(failures)}\n"
    for rep, msg in failures[:20]:
        head += f"# failed replication {rep}: {msg}\n"
    return head + "\n".join(lines) + "\n", len(failures)


_TASK_FN = {
    "simulate": _task_simulate,
    "qfcv": _task_qfcv,
    "fcv": _task_fcv,
    "aqfcv": _task_aqfcv,
    "evaluate": _task_evaluate,
}

_DEFAULT_OUTPUT = {
    "simulate": "series.csv",
    "qfcv": "qfcv_interval.csv",
    "fcv": "fcv_intervals.csv",
    "aqfcv": "rolling_intervals.csv",
    "evaluate": "metrics.csv",
}


def run_task(config: dict) -> tuple[str, int]:
    """Execute the configured task; returns (output path, failure count)."""
    task = config["task"]
    text, failures = _TASK_FN[task](config)
    out = config["output"] or _DEFAULT_OUTPUT[task]
    _write(out, text)
    return out, failures


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="erruq",
        description="Uncertainty intervals for time-series forecast errors.",
    )
    sub = parser.add_subparsers(dest="task", required=True)
    for task in TASKS:
        sp = sub.add_parser(task, help=f"run the {task} task")
        sp.add_argument("--config", "-c", default=None, help="flat key=value config file")
        sp.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config entry (JSON value); repeatable",
        )
        sp.add_argument("--output", "-o", default=None, help="output file path")
    args = parser.parse_args(argv)
    try:
        config = parse_config(args.config, args.overrides, task=args.task)
        if args.output:
            config["output"] = args.output
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        out, failures = run_task(config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # numerical/runtime failures
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    print(out)
    if failures:
        print(f"warning: {failures} replication(s) failed; see output comments", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
