"""Exact solutions of dF/dt + Q(t) F = F_N b(t) for the four schedule families.

Constant impacts give the exponential relaxation

    F(t) = [F0 - F_N b/Q] exp(-Q t) + F_N b/Q,        Q = m + b,

piecewise-constant schedules chain it across intervals with continuity.
Linear impacts m(t) = nu - mu t, b(t) = alpha - beta t (so Q = lam - omega t
with lam = alpha + nu, omega = beta + mu) solve in terms of the error
function:

    F(t)/F_N = (1/W(t)) { F0/F_N - (beta/omega)(1 - W(t))
               + (alpha*omega - beta*lam) sqrt(pi/2) e^{L^2} / omega^{3/2}
                 [erf(L) + erf(omega t / sqrt(2 omega) - L)] }

with W(t) = exp(lam t - omega t^2 / 2) and L = lam / sqrt(2 omega).  That
form cancels catastrophically once L^2 is large, so it is evaluated here
through the scaled complement erfcx:

    F(t)/F_N = (F0/F_N) * iW - (beta/omega)(iW - 1)
               + (alpha*omega - beta*lam) sqrt(pi/2) / omega^{3/2}
                 * [erfcx(L - sqrt(omega/2) t) - erfcx(L) * iW]

where iW = 1/W(t) = exp(omega t^2 / 2 - lam t) never exceeds 1 while
Q(t) >= 0, so no intermediate overflows.  Segments where omega <= OMEGA_MIN
(or omega < 0, where L turns complex) are excluded from the closed form and
routed to the fixed-step integrator instead.
"""

from __future__ import annotations

import bisect
import math

import numpy as np

from .integrate import rk4_step
from .model import (
    EffectiveSegment,
    ImpactSchedule,
    ScheduleDomainError,
    effective_segments,
)
from .special import erf as error_function
from .special import erfcx

__all__ = [
    "OMEGA_MIN",
    "ClosedFormUnavailable",
    "error_function",
    "solve_constant",
    "solve_piecewise_constant",
    "solve_linear",
    "solve_piecewise_linear",
    "OdeSolution",
]

# Below this the omega^{3/2} denominator amplifies rounding beyond the
# documented tolerances; the formula is singular at omega = 0.
OMEGA_MIN = 1e-8

_SQRT_HALF_PI = math.sqrt(math.pi / 2.0)


class ClosedFormUnavailable(ValueError):
    """The analytic form is excluded here; use the numeric integrator."""


def solve_constant(m: float, b: float, F0: float, F_N: float, t: float) -> float:
    """Constant-impact solution at elapsed time t >= 0.

    With no impacts at all (m = b = 0) functionality holds at F0; with
    b = 0 it decays as F0 exp(-m t); otherwise it relaxes monotonically
    toward the steady state F_N b / (m + b).
    """
    if m < 0 or b < 0:
        raise ScheduleDomainError(f"impact rates must be nonnegative, got m={m}, b={b}")
    q = m + b
    if q == 0.0:
        return float(F0)
    asymptote = F_N * b / q
    return (F0 - asymptote) * math.exp(-q * t) + asymptote


def solve_piecewise_constant(schedule: ImpactSchedule, F0: float, F_N: float, t: float) -> float:
    """Interval-chained constant solution; continuous at every breakpoint."""
    if schedule.kind not in {"constant", "piecewise_constant"}:
        raise ValueError(f"expected a (piecewise-)constant schedule, got {schedule.kind!r}")
    if t < schedule.t_start:
        raise ScheduleDomainError(f"t={t} precedes the schedule start {schedule.t_start}")
    value = float(F0)
    bps = schedule.breakpoints
    for j, t_j in enumerate(bps):
        t_next = bps[j + 1] if j + 1 < len(bps) else math.inf
        m = schedule.malware[j].value
        b = schedule.bonware[j].value
        if t < t_next:
            return solve_constant(m, b, value, F_N, t - t_j)
        value = solve_constant(m, b, value, F_N, t_next - t_j)
    return value


def solve_linear(
    lam: float,
    omega: float,
    alpha: float,
    beta: float,
    F0: float,
    F_N: float,
    t: float,
) -> float:
    """Linear-impact solution at elapsed time t >= 0 (see module docstring).

    Intended for the span where Q(t) = lam - omega*t stays nonnegative,
    which every validated schedule guarantees; far beyond the Q = 0 point
    the analytic form grows explosively and evaluation is refused.
    """
    if not all(map(math.isfinite, (lam, omega, alpha, beta, F0, F_N, t))):
        raise ValueError("all arguments must be finite")
    if omega <= OMEGA_MIN:
        raise ClosedFormUnavailable(
            f"omega={omega} is at or below OMEGA_MIN={OMEGA_MIN}; "
            "route this segment to the numeric integrator"
        )
    big_l = lam / math.sqrt(2.0 * omega)
    tail = big_l - math.sqrt(omega / 2.0) * t  # stays >= 0 while Q(t) >= 0
    if tail < -26.0:
        raise ClosedFormUnavailable(
            "evaluation far beyond the Q(t)=0 crossing would overflow; "
            "route this segment to the numeric integrator"
        )
    inv_w = math.exp(0.5 * omega * t * t - lam * t)
    prefactor = (alpha * omega - beta * lam) * _SQRT_HALF_PI / omega ** 1.5
    ratio = (
        (F0 / F_N) * inv_w
        - (beta / omega) * (inv_w - 1.0)
        + prefactor * (erfcx(tail) - erfcx(big_l) * inv_w)
    )
    return F_N * ratio


def _segment_value(seg: EffectiveSegment, f_start: float, F_N: float, tau: float) -> float:
    """Closed-form value inside one effective segment, tau past its start."""
    if seg.is_constant:
        return solve_constant(seg.m0, seg.b0, f_start, F_N, tau)
    omega = -(seg.m_slope + seg.b_slope)
    lam = seg.m0 + seg.b0
    alpha = seg.b0
    beta = -seg.b_slope
    return solve_linear(lam, omega, alpha, beta, f_start, F_N, tau)


def _segment_uses_fallback(seg: EffectiveSegment) -> bool:
    if seg.is_constant:
        return False
    return -(seg.m_slope + seg.b_slope) <= OMEGA_MIN


class OdeSolution:
    """Lazy piecewise evaluator F(t) for any impact schedule.

    Chains per-segment solutions with exact continuity at the segment
    boundaries.  Segments excluded from the closed form (omega <= OMEGA_MIN,
    including omega < 0) fall back to fixed-step RK4 on a cached node grid;
    ``fallback_spans`` reports where that happened.
    """

    def __init__(
        self,
        schedule: ImpactSchedule,
        F0: float,
        F_N: float,
        fallback_dt: float = 1e-3,
    ):
        if not (F_N > 0 and math.isfinite(F_N)):
            raise ValueError(f"nominal functionality must be positive, got {F_N}")
        if not (-1e-9 <= F0 <= F_N * (1 + 1e-12) + 1e-9):
            raise ValueError(f"F0={F0} outside [0, F_N={F_N}]")
        if fallback_dt <= 0:
            raise ValueError("fallback_dt must be positive")
        self.schedule = schedule
        self.F0 = float(F0)
        self.F_N = float(F_N)
        self.fallback_dt = float(fallback_dt)
        self.segments = effective_segments(schedule)
        self._starts = [seg.start for seg in self.segments]
        self._f_at_start: list[float | None] = [self.F0] + [None] * (len(self.segments) - 1)
        # Per fallback segment: (node_times, node_values) grown on demand.
        self._nodes: dict[int, tuple[list[float], list[float]]] = {}

    @property
    def t_start(self) -> float:
        return self.schedule.t_start

    @property
    def fallback_spans(self) -> list[tuple[float, float]]:
        return [
            (seg.start, seg.end) for seg in self.segments if _segment_uses_fallback(seg)
        ]

    def _segment_rhs(self, seg: EffectiveSegment):
        F_N = self.F_N

        def rhs(t: float, f: float) -> float:
            m, b = seg.impacts(t)
            return F_N * b - (m + b) * f

        return rhs

    def _fallback_value(self, idx: int, f_start: float, t: float) -> float:
        seg = self.segments[idx]
        h = self.fallback_dt
        if idx not in self._nodes:
            self._nodes[idx] = ([seg.start], [f_start])
        times, values = self._nodes[idx]
        rhs = self._segment_rhs(seg)
        n_full = int(math.floor((t - seg.start) / h + 1e-12))
        while len(times) <= n_full:
            t_k = times[-1]
            values.append(rk4_step(rhs, t_k, values[-1], h))
            times.append(seg.start + len(times) * h)
        f = values[n_full]
        t_node = times[n_full]
        rem = t - t_node
        if rem > 1e-12 * max(1.0, abs(t)):
            f = rk4_step(rhs, t_node, f, rem)
        return f

    def _start_value(self, idx: int) -> float:
        known = self._f_at_start[idx]
        if known is not None:
            return known
        prev = idx - 1
        f_prev = self._start_value(prev)
        seg = self.segments[prev]
        f = self._value_in_segment(prev, f_prev, seg.end)
        self._f_at_start[idx] = f
        return f

    def _value_in_segment(self, idx: int, f_start: float, t: float) -> float:
        seg = self.segments[idx]
        if _segment_uses_fallback(seg):
            return self._fallback_value(idx, f_start, t)
        return _segment_value(seg, f_start, self.F_N, t - seg.start)

    def at(self, t: float) -> float:
        if t < self.t_start:
            raise ScheduleDomainError(f"t={t} precedes the schedule start {self.t_start}")
        idx = bisect.bisect_right(self._starts, t) - 1
        return self._value_in_segment(idx, self._start_value(idx), t)

    def sample(self, times) -> np.ndarray:
        return np.array([self.at(float(t)) for t in np.asarray(times, dtype=float)])

    def __call__(self, t: float) -> float:
        return self.at(t)


def solve_piecewise_linear(schedule: ImpactSchedule, F0: float, F_N: float, t: float) -> float:
    """Per-segment linear/constant solution with chained initial values.

    Clamp crossings become implicit breakpoints; clamped stretches are
    re-expressed as constant (or one-sided linear) segments before solving.
    Excluded segments are integrated numerically.
    """
    return OdeSolution(schedule, F0, F_N).at(t)
