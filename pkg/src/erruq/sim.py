"""Seeded synthetic data: ARMA noise, the linear-model DGP, and a
strongly nonstationary process (integrated AR(1) plus noise with
polynomially growing variance).

All generators draw from counter-based Philox streams keyed by
``(base_seed, stream_id)``, so replications are reproducible and order-free
under parallelism.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.signal import lfilter

from .core import TimeSeries

__all__ = [
    "RngStream",
    "ArmaSpec",
    "NonstationarySpec",
    "SimSpec",
    "gen_arma",
    "gen_nonstationary",
    "simulate_linear",
]

DEFAULT_BURN_IN = 500


@dataclass(frozen=True)
class RngStream:
    """A named, reproducible random stream: (algorithm, base seed, stream id).

    Identical triples yield bit-identical draws; distinct stream ids are
    statistically independent and safe to hand to parallel workers.
    """

    seed: int
    stream: int = 0
    algorithm: str = "philox4x64"

    def __post_init__(self):
        if self.algorithm != "philox4x64":
            raise ValueError(f"unsupported RNG algorithm {self.algorithm!r}")
        if not (0 <= int(self.seed) < 2**64 and 0 <= int(self.stream) < 2**64):
            raise ValueError("seed and stream must be unsigned 64-bit integers")

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed, self.stream], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, offset: int) -> "RngStream":
        return RngStream(seed=self.seed, stream=self.stream + offset, algorithm=self.algorithm)


@dataclass(frozen=True)
class ArmaSpec:
    """ARMA(a, b) noise: eps_t = sum_k phi_k eps_{t-k} + eta_t + sum_i theta_i eta_{t-i},
    with eta_t iid N(0, innovation_sd^2) and zero initial state.

    ``burn_in`` leading samples are generated and discarded so the retained
    segment is effectively stationary for |phi| < 1.
    """

    phi: tuple[float, ...] = ()
    theta: tuple[float, ...] = ()
    innovation_sd: float = 1.0
    burn_in: int = DEFAULT_BURN_IN

    def __post_init__(self):
        phi = tuple(float(v) for v in np.atleast_1d(np.asarray(self.phi, dtype=float)).ravel()) if len(np.atleast_1d(self.phi)) else ()
        theta = tuple(float(v) for v in np.atleast_1d(np.asarray(self.theta, dtype=float)).ravel()) if len(np.atleast_1d(self.theta)) else ()
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "theta", theta)
        if not all(np.isfinite(phi)) or not all(np.isfinite(theta)):
            raise ValueError("ARMA coefficients must be finite")
        if not (np.isfinite(self.innovation_sd) and self.innovation_sd > 0):
            raise ValueError(f"innovation_sd must be > 0, got {self.innovation_sd}")
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")


def wedge_theta() -> tuple[float, ...]:
    """The 20-lag wedge of MA weights (0.1, 0.2, ..., 0.9, 1, 1, 0.9, ..., 0.1)."""
    up = [round(0.1 * i, 1) for i in range(1, 10)]
    return tuple(up + [1.0, 1.0] + up[::-1])


@dataclass(frozen=True)
class NonstationarySpec:
    """Integrated AR(1) (cumulative sum of an AR(1) path) plus an independent
    N(0, t^variance_growth_exponent) sequence."""

    arima_phi: float = 0.99
    variance_growth_exponent: float = 4.0

    def __post_init__(self):
        if not np.isfinite(self.arima_phi):
            raise ValueError("arima_phi must be finite")
        if self.variance_growth_exponent < 0:
            raise ValueError("variance_growth_exponent must be >= 0")


NoiseSpec = Union[ArmaSpec, NonstationarySpec]


@dataclass(frozen=True)
class SimSpec:
    """Linear-model DGP: y_t = x_t . beta + noise_scale * eps_t with
    x_t iid N(0, I_p)."""

    n: int
    p: int
    beta: tuple[float, ...]
    noise: NoiseSpec = field(default_factory=ArmaSpec)
    noise_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        beta = tuple(float(v) for v in np.asarray(self.beta, dtype=float).ravel())
        object.__setattr__(self, "beta", beta)
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.p < 0:
            raise ValueError("p must be >= 0")
        if len(beta) != self.p:
            raise ValueError(f"beta has length {len(beta)}, expected p = {self.p}")
        if not all(np.isfinite(beta)):
            raise ValueError("beta must be finite")
        if not (np.isfinite(self.noise_scale) and self.noise_scale >= 0):
            raise ValueError("noise_scale must be a finite nonnegative real")


def paper_beta(p: int, n_ones: int = 4) -> tuple[float, ...]:
    """Coefficient vector (1, ..., 1, 0, ..., 0) with ``n_ones`` leading ones."""
    if n_ones > p:
        raise ValueError(f"n_ones = {n_ones} exceeds p = {p}")
    return tuple([1.0] * n_ones + [0.0] * (p - n_ones))


def gen_arma(spec: ArmaSpec, n: int, rng: RngStream | np.random.Generator) -> np.ndarray:
    """Length-n post-burn-in ARMA sample path."""
    if n < 1:
        raise ValueError("n must be >= 1")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    total = n + spec.burn_in
    eta = spec.innovation_sd * gen.standard_normal(total)
    if not spec.phi and not spec.theta:
        return eta[spec.burn_in :]
    b = np.concatenate([[1.0], np.asarray(spec.theta, dtype=float)])
    a = np.concatenate([[1.0], -np.asarray(spec.phi, dtype=float)])
    eps = lfilter(b, a, eta)
    return eps[spec.burn_in :]


def gen_nonstationary(
    spec: NonstationarySpec, n: int, rng: RngStream | np.random.Generator
) -> np.ndarray:
    """Cumulative sum of an AR(1)(arima_phi) path plus independent
    N(0, t^exponent) draws, t = 1..n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    ar_part = gen_arma(ArmaSpec(phi=(spec.arima_phi,)), n, gen)
    integrated = np.cumsum(ar_part)
    t = np.arange(1, n + 1, dtype=float)
    bumps = gen.standard_normal(n) * t ** (spec.variance_growth_exponent / 2.0)
    return integrated + bumps


def gen_noise(noise: NoiseSpec, n: int, rng: RngStream | np.random.Generator) -> np.ndarray:
    if isinstance(noise, ArmaSpec):
        return gen_arma(noise, n, rng)
    if isinstance(noise, NonstationarySpec):
        return gen_nonstationary(noise, n, rng)
    raise TypeError(f"unsupported noise spec {type(noise).__name__}")


def simulate_garch_series(
    omega: float,
    tau: float,
    beta: float,
    n: int,
    rng: RngStream | np.random.Generator,
    burn_in: int = DEFAULT_BURN_IN,
) -> TimeSeries:
    """GARCH(1,1) returns R_t = sigma_t eps_t with realized volatility
    V_t = R_t^2 as the outcome; features hold the returns (p = 1)."""
    if not (omega > 0 and tau >= 0 and beta >= 0 and tau + beta < 1):
        raise ValueError("require omega > 0, tau, beta >= 0, tau + beta < 1")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    total = n + burn_in
    eps = gen.standard_normal(total)
    r = np.empty(total)
    s2 = omega / (1.0 - tau - beta)
    for t in range(total):
        r[t] = np.sqrt(s2) * eps[t]
        s2 = omega + tau * r[t] ** 2 + beta * s2
    r = r[burn_in:]
    return TimeSeries(r[:, None], r**2)


def simulate_linear(spec: SimSpec, *, n_extra: int = 0, stream: int | None = None) -> TimeSeries:
    """Simulate the linear-model series, optionally with ``n_extra`` future
    points appended (drawn from the same stream, one shot).

    ``stream`` overrides the stream id (defaults to 0); the base seed comes
    from ``spec.seed``.
    """
    total = spec.n + n_extra
    gen = RngStream(seed=spec.seed, stream=stream or 0).generator()
    x = gen.standard_normal((total, spec.p))
    eps = gen_noise(spec.noise, total, gen)
    beta = np.asarray(spec.beta, dtype=float)
    y = x @ beta + spec.noise_scale * eps
    return TimeSeries(x, y)
