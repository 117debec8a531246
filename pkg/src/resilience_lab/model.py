"""Domain types shared across the library.

A system's functionality F(t) is bounded by its nominal level F_N and is
driven by two opposing impact rates: malware impact m(t) degrades it,
bonware impact b(t) restores it toward F_N.  The total impact
Q(t) = m(t) + b(t) acts as the decay coefficient of the governing linear
ODE, dF/dt + Q(t) F = F_N b(t).

Impact schedules come in four families (constant, piecewise constant,
linear, piecewise linear).  Linear malware segments are clamped below at
zero, linear bonware segments above at a declared cap; both are
parameterized relative to their own interval start.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

__all__ = [
    "ScheduleDomainError",
    "ConstantImpact",
    "LinearImpact",
    "ImpactSchedule",
    "MissionWindow",
    "Trace",
    "evaluate_impacts",
    "validate_schedule",
    "DEFAULT_BONWARE_CAP",
]

DEFAULT_BONWARE_CAP = 1.0


class ScheduleDomainError(ValueError):
    """Raised when a schedule is evaluated outside its domain."""


@dataclass(frozen=True)
class ConstantImpact:
    """Constant impact rate over one interval."""

    value: float

    def raw(self, dt: float) -> float:
        return self.value


@dataclass(frozen=True)
class LinearImpact:
    """Linear impact rate over one interval: start + slope * (t - t_j).

    ``cap`` is the clamp level: malware segments clamp below at cap=0.0
    (value = max(0, line)), bonware segments clamp above (value =
    min(cap, line)).  The orientation is decided by the schedule, not
    stored here.
    """

    start: float
    slope: float
    cap: float = DEFAULT_BONWARE_CAP

    def raw(self, dt: float) -> float:
        return self.start + self.slope * dt


Segment = Union[ConstantImpact, LinearImpact]


def _as_segments(spec: Iterable) -> tuple[Segment, ...]:
    out = []
    for seg in spec:
        if not isinstance(seg, (ConstantImpact, LinearImpact)):
            raise TypeError(f"expected ConstantImpact or LinearImpact, got {seg!r}")
        out.append(seg)
    return tuple(out)


@dataclass(frozen=True)
class ImpactSchedule:
    """Breakpoints plus per-interval malware/bonware impact terms.

    ``breakpoints`` are the interval starts t_0 < t_1 < ... < t_{N-1};
    the last interval extends to infinity.  Derived quantities such as
    lambda_j = m_j(t_j) + b_j(t_j) are always computed on demand so the
    stored segments remain the single source of truth.
    """

    kind: str
    breakpoints: tuple[float, ...]
    malware: tuple[Segment, ...]
    bonware: tuple[Segment, ...]

    def __post_init__(self):
        if self.kind not in {"constant", "piecewise_constant", "linear", "piecewise_linear"}:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        bps = tuple(float(t) for t in self.breakpoints)
        if not bps:
            raise ValueError("need at least one breakpoint (the schedule start)")
        if any(not math.isfinite(t) for t in bps):
            raise ValueError("breakpoints must be finite")
        if any(b - a <= 0 for a, b in zip(bps, bps[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(self, "malware", _as_segments(self.malware))
        object.__setattr__(self, "bonware", _as_segments(self.bonware))
        if not (len(self.malware) == len(self.bonware) == len(bps)):
            raise ValueError("need one malware and one bonware segment per interval")

    # -- constructors -------------------------------------------------

    @classmethod
    def constant(cls, m: float, b: float, t0: float = 0.0) -> "ImpactSchedule":
        return cls("constant", (t0,), (ConstantImpact(float(m)),), (ConstantImpact(float(b)),))

    @classmethod
    def piecewise_constant(
        cls,
        breakpoints: Sequence[float],
        m_values: Sequence[float],
        b_values: Sequence[float],
    ) -> "ImpactSchedule":
        mal = tuple(ConstantImpact(float(m)) for m in m_values)
        bon = tuple(ConstantImpact(float(b)) for b in b_values)
        return cls("piecewise_constant", tuple(breakpoints), mal, bon)

    @classmethod
    def linear(
        cls,
        m0: float,
        m_decay: float,
        b0: float,
        b_growth: float,
        bonware_cap: float = DEFAULT_BONWARE_CAP,
        t0: float = 0.0,
    ) -> "ImpactSchedule":
        """Single ramp: m(t) = max(0, m0 - m_decay*(t-t0)),
        b(t) = min(cap, b0 + b_growth*(t-t0))."""
        mal = (LinearImpact(float(m0), -float(m_decay), cap=0.0),)
        bon = (LinearImpact(float(b0), float(b_growth), cap=float(bonware_cap)),)
        return cls("linear", (t0,), mal, bon)

    @classmethod
    def piecewise_linear(
        cls,
        breakpoints: Sequence[float],
        malware: Sequence[Segment],
        bonware: Sequence[Segment],
    ) -> "ImpactSchedule":
        return cls("piecewise_linear", tuple(breakpoints), tuple(malware), tuple(bonware))

    # -- evaluation ----------------------------------------------------

    @property
    def t_start(self) -> float:
        return self.breakpoints[0]

    def segment_index(self, t: float) -> int:
        if t < self.breakpoints[0]:
            raise ScheduleDomainError(
                f"t={t} precedes the schedule start {self.breakpoints[0]}"
            )
        return bisect.bisect_right(self.breakpoints, t) - 1

    def impacts_at(self, t: float) -> tuple[float, float, float]:
        """Clamped (m, b, Q) at time t; intervals are right-open."""
        j = self.segment_index(t)
        dt = t - self.breakpoints[j]
        mseg = self.malware[j]
        bseg = self.bonware[j]
        if isinstance(mseg, LinearImpact):
            m = max(mseg.cap, mseg.raw(dt))
        else:
            m = mseg.value
        if isinstance(bseg, LinearImpact):
            b = min(bseg.cap, bseg.raw(dt))
        else:
            b = bseg.value
        return m, b, m + b


@dataclass(frozen=True)
class MissionWindow:
    """Half-open analysis window [t0, T] with positive duration."""

    t0: float
    T: float

    def __post_init__(self):
        if not (math.isfinite(self.t0) and math.isfinite(self.T)):
            raise ValueError("window bounds must be finite")
        if self.T - self.t0 <= 0:
            raise ValueError(f"window duration must be positive, got T={self.T}, t0={self.t0}")

    @property
    def duration(self) -> float:
        return self.T - self.t0


@dataclass(frozen=True)
class Trace:
    """Sampled functionality curve {(t_k, F_k)} with nominal level F_N.

    Structural invariants (lengths, finiteness, strictly increasing
    times, F_N > 0) are enforced at construction.  Range violations
    (samples outside [0, F_N]) are *flagged*, never clipped: ingested
    measurement data may legitimately carry them.
    """

    times: np.ndarray
    values: np.ndarray
    nominal: float
    source: str = field(default="", compare=False)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or v.ndim != 1:
            raise ValueError("times and values must be one-dimensional")
        if len(t) != len(v):
            raise ValueError(f"length mismatch: {len(t)} times vs {len(v)} values")
        if len(t) < 2:
            raise ValueError("a trace needs at least two samples")
        if not np.isfinite(t).all() or not np.isfinite(v).all():
            raise ValueError("trace samples must be finite")
        if not (np.diff(t) > 0).all():
            raise ValueError("trace times must be strictly increasing")
        if not (math.isfinite(self.nominal) and self.nominal > 0):
            raise ValueError(f"nominal functionality must be positive, got {self.nominal}")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "nominal", float(self.nominal))

    def __len__(self) -> int:
        return len(self.times)

    @property
    def t_start(self) -> float:
        return float(self.times[0])

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def out_of_range_indices(self, tol: float = 1e-9) -> np.ndarray:
        """Indices of samples outside [0, F_N] beyond tol (flag, don't clip)."""
        bad = (self.values < -tol) | (self.values > self.nominal + tol)
        return np.nonzero(bad)[0]

    def restricted(self, t_max: float) -> "Trace":
        """Sub-trace with times <= t_max."""
        keep = self.times <= t_max
        if keep.sum() < 2:
            raise ValueError(f"restriction to t<={t_max} leaves fewer than 2 samples")
        return Trace(self.times[keep].copy(), self.values[keep].copy(),
                     self.nominal, source=self.source)


def evaluate_impacts(schedule: ImpactSchedule, t: float) -> tuple[float, float, float]:
    """Clamped (m, b, Q=m+b) of a schedule at time t."""
    return schedule.impacts_at(t)


@dataclass(frozen=True)
class EffectiveSegment:
    """One clamp-resolved interval: both impacts are plain lines on it.

    Within [start, end) the clamped schedule coincides with
    m(t) = m0 + m_slope*(t-start) and b(t) = b0 + b_slope*(t-start);
    clamp crossings never occur inside an effective segment.
    """

    start: float
    end: float  # math.inf for the final segment
    m0: float
    m_slope: float
    b0: float
    b_slope: float

    def impacts(self, t: float) -> tuple[float, float]:
        dt = t - self.start
        return self.m0 + self.m_slope * dt, self.b0 + self.b_slope * dt

    @property
    def is_constant(self) -> bool:
        return self.m_slope == 0.0 and self.b_slope == 0.0


def _clamp_crossing(seg: Segment, lo: float, hi: float, t_seg: float) -> list[float]:
    """Times strictly inside (lo, hi) where the raw line meets its clamp level."""
    if not isinstance(seg, LinearImpact) or seg.slope == 0.0:
        return []
    t_cross = t_seg + (seg.cap - seg.start) / seg.slope
    eps = 1e-12 * max(1.0, abs(lo), abs(hi) if math.isfinite(hi) else abs(lo))
    if t_cross <= lo + eps:
        return []
    if math.isfinite(hi) and t_cross >= hi - eps:
        return []
    return [t_cross]


def effective_segments(schedule: ImpactSchedule) -> list[EffectiveSegment]:
    """Split every interval at its clamp crossings and resolve the clamps.

    The result is a chain of segments on which both impacts are exact
    (unclamped) lines, suitable for per-segment analytic solutions and
    for aligning integrator steps with derivative discontinuities.
    """
    out: list[EffectiveSegment] = []
    bps = schedule.breakpoints
    for j, t_j in enumerate(bps):
        t_next = bps[j + 1] if j + 1 < len(bps) else math.inf
        mseg = schedule.malware[j]
        bseg = schedule.bonware[j]
        cuts = sorted(
            set(_clamp_crossing(mseg, t_j, t_next, t_j) + _clamp_crossing(bseg, t_j, t_next, t_j))
        )
        bounds = [t_j] + cuts + [t_next]
        for lo, hi in zip(bounds, bounds[1:]):
            probe = lo + (min(hi, lo + 2.0) - lo) * 0.5 if math.isfinite(hi) else lo + 1.0
            dt_probe = probe - t_j
            dt_lo = lo - t_j
            if isinstance(mseg, LinearImpact):
                if mseg.raw(dt_probe) < mseg.cap:  # malware clamps below
                    m0, m_slope = mseg.cap, 0.0
                else:
                    m0, m_slope = mseg.raw(dt_lo), mseg.slope
            else:
                m0, m_slope = mseg.value, 0.0
            if isinstance(bseg, LinearImpact):
                if bseg.raw(dt_probe) > bseg.cap:  # bonware clamps above
                    b0, b_slope = bseg.cap, 0.0
                else:
                    b0, b_slope = bseg.raw(dt_lo), bseg.slope
            else:
                b0, b_slope = bseg.value, 0.0
            out.append(EffectiveSegment(lo, hi, m0, m_slope, b0, b_slope))
    return out


def validate_schedule(
    schedule: ImpactSchedule,
    window: MissionWindow,
    grid_points: int = 10_000,
) -> list[str]:
    """Check schedule invariants on a dense grid over the window.

    Violations are returned as data (one string each), not raised:
    callers decide whether a dirty schedule is fatal.
    """
    violations: list[str] = []
    if any(b - a <= 0 for a, b in zip(schedule.breakpoints, schedule.breakpoints[1:])):
        violations.append("breakpoints: not strictly increasing")
    if window.t0 < schedule.t_start:
        violations.append(
            f"window: starts at {window.t0} before schedule start {schedule.t_start}"
        )
        return violations
    grid = np.linspace(window.t0, window.T, grid_points)
    worst_m = worst_b = 0.0
    for t in grid:
        m, b, _ = schedule.impacts_at(float(t))
        worst_m = min(worst_m, m)
        worst_b = min(worst_b, b)
    if worst_m < 0:
        violations.append(f"malware: negative impact {worst_m:.6g} inside window")
    if worst_b < 0:
        violations.append(f"bonware: negative impact {worst_b:.6g} inside window")
    for j, seg in enumerate(schedule.malware):
        if isinstance(seg, ConstantImpact) and seg.value < 0:
            violations.append(f"malware[{j}]: negative constant {seg.value:.6g}")
    for j, seg in enumerate(schedule.bonware):
        if isinstance(seg, ConstantImpact) and seg.value < 0:
            violations.append(f"bonware[{j}]: negative constant {seg.value:.6g}")
        if isinstance(seg, LinearImpact) and seg.cap <= 0:
            violations.append(f"bonware[{j}]: cap must be positive, got {seg.cap:.6g}")
    return violations
