"""Seeded stochastic difference-equation simulator and ensemble machinery.

Per step k (of duration dt, default one second) the update is

    F_k = F_{k-1} + A_b E_b (F_N - F_{k-1}) - A_m E_m F_{k-1}

with A_m ~ Bernoulli(theta_m(t)), A_b ~ Bernoulli(theta_b(t)),
E_m ~ Uniform(0, gamma_m(t)), E_b ~ Uniform(0, gamma_b(t)), all four drawn
at the interval start t = t_{k-1}.  The update form keeps F_k inside
[0, F_N] for any admissible draws.

Reproducibility: realization j of an ensemble uses the Philox-4x64
counter-based generator keyed with (base_seed, j) and consumes exactly
four raw uniform doubles per step in the fixed order (A_m, E_m, A_b, E_b).
The ensemble mean/variance use chunked Welford merging with a fixed chunk
size, so results are bit-identical for a given (base_seed, n) regardless
of worker count.

Mapping to the deterministic model: a Bernoulli/Uniform pair with rate
theta and bound gamma exerts mean impact theta*gamma/2 per unit step, so a
deterministic impact schedule maps canonically to theta = 2*impact/gamma
(theta = 2*impact at the default gamma = 1).  Taking expectations of the
update gives the exact mean recurrence; for constant rates it solves to

    EF_k = [EF_0 - F_N b/Q] (1-Q)^k + F_N b/Q,

which tracks the continuous solution for large k when Q = m + b < 1.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .model import ImpactSchedule, Trace
from .special import normal_cdf

__all__ = [
    "RateScheduleError",
    "ConstantRate",
    "SteppedRate",
    "ClampedLinearRate",
    "GradualRate",
    "MappedImpactRate",
    "SdeParams",
    "Realization",
    "Ensemble",
    "step",
    "simulate",
    "run_ensemble",
    "sde_from_impacts",
    "impact_rate",
    "expected_trajectory",
    "mean_recurrence",
    "ENSEMBLE_CHUNK",
    "THREADS_ENV_VAR",
]

# Fixed chunking is part of the determinism contract; do not tune per run.
ENSEMBLE_CHUNK = 512
THREADS_ENV_VAR = "RESILIENCE_LAB_THREADS"


class RateScheduleError(ValueError):
    """A rate schedule leaves its admissible range."""


@dataclass(frozen=True)
class ConstantRate:
    value: float

    def at(self, t: float) -> float:
        return self.value


@dataclass(frozen=True)
class SteppedRate:
    """Zero before onset, constant value from the onset on (inclusive)."""

    value: float
    onset: float

    def at(self, t: float) -> float:
        return self.value if t >= self.onset else 0.0


@dataclass(frozen=True)
class ClampedLinearRate:
    """intercept + slope*t, clipped into [floor, cap]."""

    intercept: float
    slope: float
    floor: float = 0.0
    cap: float = 1.0

    def at(self, t: float) -> float:
        return min(self.cap, max(self.floor, self.intercept + self.slope * t))


@dataclass(frozen=True)
class GradualRate:
    """Standard-normal CDF ramp Phi(a*t + b), optionally switched off.

    With ``off_after`` set the rate drops to zero for t > off_after
    (the boundary instant itself is still active).
    """

    a: float
    b: float
    off_after: float | None = None

    def at(self, t: float) -> float:
        if self.off_after is not None and t > self.off_after:
            return 0.0
        return normal_cdf(self.a * t + self.b)


@dataclass(frozen=True)
class MappedImpactRate:
    """factor * impact(t), reading one side of a deterministic schedule."""

    schedule: ImpactSchedule
    source: str  # "malware" | "bonware"
    factor: float

    def __post_init__(self):
        if self.source not in {"malware", "bonware"}:
            raise ValueError(f"source must be 'malware' or 'bonware', got {self.source!r}")

    def at(self, t: float) -> float:
        m, b, _ = self.schedule.impacts_at(t)
        return self.factor * (m if self.source == "malware" else b)


RateSchedule = Union[ConstantRate, SteppedRate, ClampedLinearRate, GradualRate, MappedImpactRate]


def _as_rate(value) -> RateSchedule:
    if isinstance(value, (int, float)):
        return ConstantRate(float(value))
    if hasattr(value, "at"):
        return value
    raise TypeError(f"expected a rate schedule or number, got {value!r}")


@dataclass(frozen=True)
class SdeParams:
    """Stochastic model parameters: four rate schedules plus the step grid."""

    theta_m: RateSchedule
    theta_b: RateSchedule
    gamma_m: RateSchedule = ConstantRate(1.0)
    gamma_b: RateSchedule = ConstantRate(1.0)
    F_N: float = 1.0
    F0: float = 1.0
    steps: int = 100
    step_seconds: float = 1.0
    t0: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta_m", _as_rate(self.theta_m))
        object.__setattr__(self, "theta_b", _as_rate(self.theta_b))
        object.__setattr__(self, "gamma_m", _as_rate(self.gamma_m))
        object.__setattr__(self, "gamma_b", _as_rate(self.gamma_b))
        if self.steps < 1:
            raise ValueError("need at least one step")
        if self.step_seconds <= 0:
            raise ValueError("step duration must be positive")
        if not (self.F_N > 0):
            raise ValueError("nominal functionality must be positive")
        if not (0.0 <= self.F0 <= self.F_N):
            raise ValueError(f"F0={self.F0} outside [0, F_N={self.F_N}]")

    @property
    def times(self) -> np.ndarray:
        """Sample times t_0 .. t_K (K = steps)."""
        return self.t0 + self.step_seconds * np.arange(self.steps + 1)

    @property
    def draw_times(self) -> np.ndarray:
        """Interval starts t_0 .. t_{K-1}: where step k reads its rates."""
        return self.t0 + self.step_seconds * np.arange(self.steps)

    def rate_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        ts = self.draw_times
        th_m = np.array([self.theta_m.at(float(t)) for t in ts])
        th_b = np.array([self.theta_b.at(float(t)) for t in ts])
        g_m = np.array([self.gamma_m.at(float(t)) for t in ts])
        g_b = np.array([self.gamma_b.at(float(t)) for t in ts])
        return th_m, th_b, g_m, g_b

    def validate(self) -> None:
        """Reject inadmissible rates, naming the first offending time."""
        th_m, th_b, g_m, g_b = self.rate_arrays()
        ts = self.draw_times
        for name, arr, lo_ok in (
            ("theta_m", th_m, True), ("theta_b", th_b, True),
        ):
            bad = np.nonzero((arr < 0.0) | (arr > 1.0))[0]
            if bad.size:
                k = bad[0]
                raise RateScheduleError(
                    f"{name}({ts[k]:g}) = {arr[k]:.6g} outside [0, 1]"
                )
        for name, arr in (("gamma_m", g_m), ("gamma_b", g_b)):
            bad = np.nonzero((arr <= 0.0) | (arr > 1.0))[0]
            if bad.size:
                k = bad[0]
                raise RateScheduleError(
                    f"{name}({ts[k]:g}) = {arr[k]:.6g} outside (0, 1]"
                )
        if isinstance(self.theta_b, GradualRate) and self.theta_b.a < 0:
            raise RateScheduleError(
                "a gradual bonware success rate must be nondecreasing (a >= 0)"
            )


@dataclass(frozen=True)
class Realization:
    """One seeded path plus its per-step draw log (A_m, E_m, A_b, E_b)."""

    base_seed: int
    stream: int
    trace: Trace
    events: np.ndarray  # shape (steps, 4), columns A_m, E_m, A_b, E_b

    @property
    def a_m(self) -> np.ndarray:
        return self.events[:, 0]

    @property
    def e_m(self) -> np.ndarray:
        return self.events[:, 1]

    @property
    def a_b(self) -> np.ndarray:
        return self.events[:, 2]

    @property
    def e_b(self) -> np.ndarray:
        return self.events[:, 3]


@dataclass(frozen=True)
class Ensemble:
    """Pointwise mean/variance of n seeded realizations (sample variance)."""

    n: int
    base_seed: int
    times: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    kept: tuple[Realization, ...] = ()

    def as_trace(self, nominal: float) -> Trace:
        return Trace(self.times.copy(), self.mean.copy(), nominal, source="ensemble-mean")


def step(F_prev: float, F_N: float, draws: tuple[float, float, float, float]) -> float:
    """Apply one update; with all draws zero the state is unchanged."""
    a_m, e_m, a_b, e_b = draws
    return F_prev + a_b * e_b * (F_N - F_prev) - a_m * e_m * F_prev


def _philox(base_seed: int, stream: int) -> np.random.Generator:
    key = np.array([np.uint64(base_seed & 0xFFFFFFFFFFFFFFFF),
                    np.uint64(stream & 0xFFFFFFFFFFFFFFFF)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _run_batch(
    params: SdeParams,
    base_seed: int,
    streams: Sequence[int],
    rates: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray],
    want_events: bool = False,
):
    """Simulate a batch of realizations; shared vectorized step loop.

    Returns (values, events) with values of shape (len(streams), steps+1);
    events is None unless requested.
    """
    th_m, th_b, g_m, g_b = rates
    n = len(streams)
    k_steps = params.steps
    draws = np.empty((n, k_steps, 4))
    for i, stream in enumerate(streams):
        draws[i] = _philox(base_seed, stream).random((k_steps, 4))
    a_m = draws[:, :, 0] < th_m[None, :]
    e_m = draws[:, :, 1] * g_m[None, :]
    a_b = draws[:, :, 2] < th_b[None, :]
    e_b = draws[:, :, 3] * g_b[None, :]
    values = np.empty((n, k_steps + 1))
    values[:, 0] = params.F0
    f = np.full(n, float(params.F0))
    F_N = params.F_N
    for k in range(k_steps):
        f = f + (a_b[:, k] * e_b[:, k]) * (F_N - f) - (a_m[:, k] * e_m[:, k]) * f
        values[:, k + 1] = f
    events = None
    if want_events:
        events = np.stack([a_m.astype(float), e_m, a_b.astype(float), e_b], axis=2)
    return values, events


def simulate(params: SdeParams, seed: int, stream: int = 0) -> Realization:
    """One realization, bit-reproducible from (seed, stream)."""
    params.validate()
    values, events = _run_batch(params, seed, [stream], params.rate_arrays(), want_events=True)
    trace = Trace(params.times, values[0], params.F_N, source=f"sde seed={seed} stream={stream}")
    return Realization(seed, stream, trace, events[0])


def _merge_welford(n_a, mean_a, m2_a, n_b, mean_b, m2_b):
    n = n_a + n_b
    delta = mean_b - mean_a
    mean = mean_a + delta * (n_b / n)
    m2 = m2_a + m2_b + delta * delta * (n_a * n_b / n)
    return n, mean, m2


def _worker_count() -> int:
    raw = os.environ.get(THREADS_ENV_VAR, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_ensemble(
    params: SdeParams,
    base_seed: int,
    n: int,
    keep_runs: int = 0,
    threads: int | None = None,
) -> Ensemble:
    """Pointwise mean/variance over n realizations with streams 0..n-1.

    The reduction merges fixed-size chunks in index order (chunk statistics
    via a stable two-pass formula, chunks via Welford merging), so the
    result does not depend on how many workers computed the chunks.
    """
    if n < 1:
        raise ValueError("need n >= 1 realizations")
    params.validate()
    rates = params.rate_arrays()
    if threads is None:
        threads = _worker_count()

    chunks = [range(lo, min(lo + ENSEMBLE_CHUNK, n)) for lo in range(0, n, ENSEMBLE_CHUNK)]

    def chunk_stats(streams):
        values, _ = _run_batch(params, base_seed, list(streams), rates)
        c_mean = values.mean(axis=0)
        c_m2 = ((values - c_mean) ** 2).sum(axis=0)
        return len(streams), c_mean, c_m2

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(chunk_stats, chunks))
    else:
        results = [chunk_stats(c) for c in chunks]

    n_acc, mean_acc, m2_acc = results[0]
    for n_c, mean_c, m2_c in results[1:]:
        n_acc, mean_acc, m2_acc = _merge_welford(n_acc, mean_acc, m2_acc, n_c, mean_c, m2_c)
    variance = m2_acc / (n_acc - 1) if n_acc > 1 else np.zeros_like(mean_acc)

    kept = tuple(simulate(params, base_seed, stream=j) for j in range(min(keep_runs, n)))
    return Ensemble(
        n=n, base_seed=base_seed, times=params.times,
        mean=mean_acc, variance=variance, kept=kept,
    )


def impact_rate(theta: float, gamma: float) -> float:
    """Mean impact per unit step of a Bernoulli(theta)/Uniform(0,gamma) pair."""
    return theta * gamma / 2.0


def sde_from_impacts(
    schedule: ImpactSchedule,
    F_N: float,
    F0: float,
    steps: int,
    step_seconds: float = 1.0,
    gamma_m: float = 1.0,
    gamma_b: float = 1.0,
) -> SdeParams:
    """Canonical stochastic counterpart of a deterministic impact schedule.

    theta = 2*impact/gamma per side, so the mean step impact theta*gamma/2
    reproduces the deterministic rate.  Fails (naming the offending time)
    wherever the implied success probability would exceed one.
    """
    params = SdeParams(
        theta_m=MappedImpactRate(schedule, "malware", 2.0 / gamma_m),
        theta_b=MappedImpactRate(schedule, "bonware", 2.0 / gamma_b),
        gamma_m=ConstantRate(gamma_m),
        gamma_b=ConstantRate(gamma_b),
        F_N=F_N,
        F0=F0,
        steps=steps,
        step_seconds=step_seconds,
        t0=schedule.t_start,
    )
    params.validate()
    return params


def expected_trajectory(m: float, b: float, F_N: float, F0: float, K: int) -> np.ndarray:
    """Exact mean sequence for constant rates: EF_k = [F0 - F_N b/Q](1-Q)^k + F_N b/Q.

    Warns (but still computes) when Q = m + b >= 1, where the discrete
    recurrence no longer tracks the continuous solution.
    """
    q = m + b
    ks = np.arange(K + 1)
    if q == 0.0:
        return np.full(K + 1, float(F0))
    if q >= 1.0:
        warnings.warn(
            f"Q = m + b = {q:.6g} >= 1: the recurrence alternates and no longer "
            "approximates the continuous model",
            UserWarning,
            stacklevel=2,
        )
    asymptote = F_N * b / q
    return (F0 - asymptote) * (1.0 - q) ** ks + asymptote


def mean_recurrence(params: SdeParams) -> np.ndarray:
    """Exact E[F_k] for arbitrary schedules, by taking expectations stepwise.

    Independence of the draws from the current state makes
    E F_k = E F_{k-1} + (theta_b gamma_b / 2)(F_N - E F_{k-1})
                       - (theta_m gamma_m / 2) E F_{k-1} exact.
    """
    th_m, th_b, g_m, g_b = params.rate_arrays()
    mal = th_m * g_m / 2.0
    bon = th_b * g_b / 2.0
    out = np.empty(params.steps + 1)
    out[0] = params.F0
    f = float(params.F0)
    for k in range(params.steps):
        f = f + bon[k] * (params.F_N - f) - mal[k] * f
        out[k + 1] = f
    return out
