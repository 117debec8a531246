"""Fixed-step RK4 integration of dF/dt = F_N b(t) - Q(t) F.

Serves as the brute-force ground truth for the analytic solutions and as
the fallback on parameter regions they exclude.  Breakpoints and clamp
crossings are forced onto the step grid so no step integrates across a
derivative discontinuity; within each effective segment the right-hand
side is smooth and the classic fourth-order scheme keeps its O(dt^4)
global error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ImpactSchedule, Trace, effective_segments

__all__ = ["IntegratorConfig", "StepRejection", "integrate", "rk4_step", "rk4_segment_nodes"]


class StepRejection(RuntimeError):
    """A sample left the admissible functionality band."""


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed step size and end time; dt must resolve the span (>= 10 steps)."""

    dt: float
    t_end: float


def rk4_step(rhs, t: float, y: float, h: float) -> float:
    """One classic Runge-Kutta step of size h for a scalar ODE."""
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = rhs(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_segment_nodes(rhs, t0: float, y0: float, t1: float, dt: float):
    """March [t0, t1] with uniform steps <= dt; yields every node after t0."""
    span = t1 - t0
    n = max(1, int(math.ceil(span / dt - 1e-12)))
    h = span / n
    y = y0
    for k in range(1, n + 1):
        y = rk4_step(rhs, t0 + (k - 1) * h, y, h)
        yield (t1 if k == n else t0 + k * h), y


def integrate(
    schedule: ImpactSchedule,
    F0: float,
    F_N: float,
    config: IntegratorConfig,
    band_tol: float = 1e-6,
) -> Trace:
    """Integrate from the schedule start to config.t_end; trace holds every step.

    Raises StepRejection if any sample leaves [-band_tol, F_N + band_tol]:
    for valid inputs the exact flow stays inside [0, F_N], so an excursion
    means the step size does not resolve the dynamics.
    """
    t0 = schedule.t_start
    if config.dt <= 0:
        raise ValueError(f"dt must be positive, got {config.dt}")
    if config.t_end <= t0:
        raise ValueError(f"t_end={config.t_end} must exceed the schedule start {t0}")
    if config.dt > (config.t_end - t0) / 10.0:
        raise ValueError(
            f"dt={config.dt} too coarse for span {config.t_end - t0}; need at least 10 steps"
        )
    if not (-band_tol <= F0 <= F_N + band_tol):
        raise ValueError(f"F0={F0} outside [0, F_N={F_N}]")

    times = [t0]
    values = [float(F0)]
    for seg in effective_segments(schedule):
        if seg.start >= config.t_end:
            break
        seg_end = min(seg.end, config.t_end)
        if seg_end <= seg.start:
            continue

        def rhs(t: float, f: float, _seg=seg) -> float:
            m, b = _seg.impacts(t)
            return F_N * b - (m + b) * f

        for t_k, y_k in rk4_segment_nodes(rhs, seg.start, values[-1], seg_end, config.dt):
            if not (-band_tol <= y_k <= F_N + band_tol):
                raise StepRejection(
                    f"F={y_k:.6g} at t={t_k:.6g} left [{-band_tol}, {F_N + band_tol}]; "
                    "reduce dt"
                )
            times.append(t_k)
            values.append(y_k)
    return Trace(np.array(times), np.array(values), F_N, source="rk4")
