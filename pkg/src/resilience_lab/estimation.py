"""Loss functions and Nelder-Mead simplex fitting of model parameters.

Bounded parameters (impact rates are nonnegative; some live in finite
intervals) are optimized through smooth reparameterizations — log for
one-sided bounds, logit for two-sided — so the simplex walks an
unconstrained space and every accepted vertex maps back inside its
bounds.  The simplex itself is the standard reflect / expand / contract /
shrink iteration with coefficients (1, 2, 0.5, 0.5).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .closed_form import OdeSolution
from .model import ImpactSchedule, Trace

__all__ = [
    "Bounds",
    "ParameterVector",
    "FitSetupError",
    "NelderMeadConfig",
    "FitResult",
    "squared_error_loss",
    "beta_loss",
    "nelder_mead",
    "fit_model",
    "MODEL_FAMILIES",
]


class FitSetupError(ValueError):
    """The optimization cannot start from the given configuration."""


@dataclass(frozen=True)
class Bounds:
    """Open box for one parameter; None means unbounded on that side."""

    lower: float | None = None
    upper: float | None = None

    def __post_init__(self):
        if self.lower is not None and self.upper is not None and self.lower >= self.upper:
            raise ValueError(f"empty bounds ({self.lower}, {self.upper})")

    def to_internal(self, x: float) -> float:
        if self.lower is None and self.upper is None:
            return x
        if self.upper is None:
            if x <= self.lower:
                raise ValueError(f"{x} not above lower bound {self.lower}")
            return math.log(x - self.lower)
        if self.lower is None:
            if x >= self.upper:
                raise ValueError(f"{x} not below upper bound {self.upper}")
            return -math.log(self.upper - x)
        if not (self.lower < x < self.upper):
            raise ValueError(f"{x} outside ({self.lower}, {self.upper})")
        return math.log((x - self.lower) / (self.upper - x))

    def from_internal(self, u: float) -> float:
        if self.lower is None and self.upper is None:
            return u
        if self.upper is None:
            return self.lower + math.exp(u)
        if self.lower is None:
            return self.upper - math.exp(-u)
        # logistic keeps the value strictly inside the box
        if u >= 0:
            z = math.exp(-u)
            frac = 1.0 / (1.0 + z)
        else:
            z = math.exp(u)
            frac = z / (1.0 + z)
        return self.lower + (self.upper - self.lower) * frac


@dataclass(frozen=True)
class ParameterVector:
    """Named parameters with per-parameter bounds.

    ``to_internal``/``with_internal`` hop between the natural values and
    the unconstrained representation the simplex operates on.
    """

    names: tuple[str, ...]
    values: np.ndarray
    bounds: tuple[Bounds, ...]

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "names", tuple(self.names))
        bnds = tuple(self.bounds)
        if not (len(self.names) == len(vals) == len(bnds)):
            raise ValueError("names, values and bounds must align")
        object.__setattr__(self, "bounds", bnds)

    @classmethod
    def from_dict(
        cls,
        values: Mapping[str, float],
        bounds: Mapping[str, Bounds] | None = None,
    ) -> "ParameterVector":
        names = tuple(values)
        bmap = bounds or {}
        return cls(
            names,
            np.array([float(values[n]) for n in names]),
            tuple(bmap.get(n, Bounds()) for n in names),
        )

    def asdict(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.names, self.values)}

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def to_internal(self) -> np.ndarray:
        return np.array([b.to_internal(float(x)) for b, x in zip(self.bounds, self.values)])

    def with_internal(self, u: np.ndarray) -> "ParameterVector":
        vals = np.array([b.from_internal(float(ui)) for b, ui in zip(self.bounds, u)])
        return ParameterVector(self.names, vals, self.bounds)

    def distance(self, other: "ParameterVector") -> float:
        return float(np.linalg.norm(self.values - np.asarray(other.values, dtype=float)))


def squared_error_loss(predicted: Trace, observed: Trace) -> float:
    """Sum of squared residuals over an exactly shared time grid."""
    if len(predicted) != len(observed) or not np.array_equal(predicted.times, observed.times):
        raise ValueError("traces are not on the same time grid; resample explicitly first")
    r = observed.values - predicted.values
    return float(np.dot(r, r))


def beta_loss(predicted: Trace, observed: Trace) -> float:
    """Cross-entropy-style loss -sum F log Y - sum (1-F) log(1-Y).

    Values are used as-is, so both traces should be on the normalized
    scale: observed strictly inside (0, 1), predicted within [0, 1].
    """
    if len(predicted) != len(observed) or not np.array_equal(predicted.times, observed.times):
        raise ValueError("traces are not on the same time grid; resample explicitly first")
    y = observed.values
    f = predicted.values
    bad = np.nonzero((y <= 0.0) | (y >= 1.0))[0]
    if bad.size:
        k = bad[0]
        raise ValueError(
            f"observed value {y[k]!r} at t={observed.times[k]!r} (sample {k}) "
            "is outside the open interval (0, 1) required by the beta loss"
        )
    if ((f < -1e-9) | (f > 1.0 + 1e-9)).any():
        raise ValueError("predicted values must lie in [0, 1] for the beta loss")
    return float(-np.sum(f * np.log(y)) - np.sum((1.0 - f) * np.log1p(-y)))


@dataclass(frozen=True)
class NelderMeadConfig:
    reflection: float = 1.0
    expansion: float = 2.0
    contraction: float = 0.5
    shrink: float = 0.5
    max_iter: int = 10_000
    diameter_tol: float = 1e-8
    loss_spread_tol: float = 1e-12
    # Initial simplex offsets in the internal space: 5% relative,
    # 0.025 absolute for zero coordinates.
    init_step_rel: float = 0.05
    init_step_abs: float = 0.025


@dataclass(frozen=True)
class FitResult:
    estimate: ParameterVector
    loss: float
    iterations: int
    converged: bool
    simplex_diameter: float
    n_evaluations: int
    loss_initial: float
    param_distance_from_initial: float = 0.0
    extras: dict = field(default_factory=dict)


def nelder_mead(
    loss: Callable[[ParameterVector], float],
    initial: ParameterVector,
    config: NelderMeadConfig = NelderMeadConfig(),
) -> FitResult:
    """Minimize ``loss`` from ``initial``; deterministic given its inputs.

    The best vertex's loss is non-increasing across iterations (reflection,
    expansion and contraction replace only the worst vertex; shrinking
    contracts toward the best one).
    """
    u0 = initial.to_internal()
    dim = len(u0)
    evals = 0

    def f(u: np.ndarray) -> float:
        nonlocal evals
        evals += 1
        return float(loss(initial.with_internal(u)))

    simplex = [u0.copy()]
    for i in range(dim):
        u = u0.copy()
        du = config.init_step_rel * abs(u[i]) if u[i] != 0.0 else config.init_step_abs
        u[i] += du
        simplex.append(u)
    fvals = [f(u) for u in simplex]
    if any(not math.isfinite(v) for v in fvals):
        raise FitSetupError("loss is not finite on the initial simplex")
    loss_initial = fvals[0]

    iterations = 0
    converged = False
    while iterations < config.max_iter:
        order = np.argsort(fvals, kind="stable")
        simplex = [simplex[i] for i in order]
        fvals = [fvals[i] for i in order]
        diameter = max(float(np.linalg.norm(u - simplex[0])) for u in simplex[1:]) if dim else 0.0
        if diameter < config.diameter_tol or (fvals[-1] - fvals[0]) < config.loss_spread_tol:
            converged = True
            break
        iterations += 1

        centroid = np.mean(simplex[:-1], axis=0)
        worst = simplex[-1]
        reflected = centroid + config.reflection * (centroid - worst)
        f_r = f(reflected)
        if f_r < fvals[0]:
            expanded = centroid + config.expansion * (reflected - centroid)
            f_e = f(expanded)
            if f_e < f_r:
                simplex[-1], fvals[-1] = expanded, f_e
            else:
                simplex[-1], fvals[-1] = reflected, f_r
            continue
        if f_r < fvals[-2]:
            simplex[-1], fvals[-1] = reflected, f_r
            continue
        if f_r < fvals[-1]:
            contracted = centroid + config.contraction * (reflected - centroid)
        else:
            contracted = centroid - config.contraction * (centroid - worst)
        f_c = f(contracted)
        if f_c < min(f_r, fvals[-1]):
            simplex[-1], fvals[-1] = contracted, f_c
            continue
        best = simplex[0]
        for i in range(1, dim + 1):
            simplex[i] = best + config.shrink * (simplex[i] - best)
            fvals[i] = f(simplex[i])

    order = np.argsort(fvals, kind="stable")
    simplex = [simplex[i] for i in order]
    fvals = [fvals[i] for i in order]
    diameter = max(float(np.linalg.norm(u - simplex[0])) for u in simplex[1:]) if dim else 0.0
    estimate = initial.with_internal(simplex[0])
    return FitResult(
        estimate=estimate,
        loss=fvals[0],
        iterations=iterations,
        converged=converged,
        simplex_diameter=diameter,
        n_evaluations=evals,
        loss_initial=loss_initial,
        param_distance_from_initial=estimate.distance(initial),
    )


def _positive(names: Sequence[str]) -> dict[str, Bounds]:
    return {n: Bounds(lower=0.0) for n in names}


def _constant_schedule(p: ParameterVector, structure: dict) -> ImpactSchedule:
    return ImpactSchedule.constant(p["m"], p["b"], t0=structure.get("t0", 0.0))


def _piecewise_constant_schedule(p: ParameterVector, structure: dict) -> ImpactSchedule:
    breakpoints = structure["breakpoints"]
    k = len(breakpoints)
    ms = [p[f"m{j + 1}"] for j in range(k)]
    bs = [p[f"b{j + 1}"] for j in range(k)]
    return ImpactSchedule.piecewise_constant(breakpoints, ms, bs)


def _ramp_schedule(p: ParameterVector, structure: dict) -> ImpactSchedule:
    return ImpactSchedule.linear(
        p["m0"], p["m1"], p["b0"], p["b1"],
        bonware_cap=structure.get("bonware_cap", 1.0),
        t0=structure.get("t0", 0.0),
    )


MODEL_FAMILIES: dict[str, Callable[[ParameterVector, dict], ImpactSchedule]] = {
    "constant": _constant_schedule,
    "piecewise_constant": _piecewise_constant_schedule,
    "linear": _ramp_schedule,
    "piecewise_linear": _ramp_schedule,
}


def default_initial(family: str, structure: dict | None = None) -> ParameterVector:
    """A generic interior starting point for each family."""
    if family == "constant":
        return ParameterVector.from_dict({"m": 0.1, "b": 0.1}, _positive(["m", "b"]))
    if family == "piecewise_constant":
        k = len((structure or {}).get("breakpoints", (0.0,)))
        names = [f"m{j + 1}" for j in range(k)] + [f"b{j + 1}" for j in range(k)]
        return ParameterVector.from_dict({n: 0.1 for n in names}, _positive(names))
    if family in {"linear", "piecewise_linear"}:
        names = ["m0", "m1", "b0", "b1"]
        return ParameterVector.from_dict(
            {"m0": 0.1, "m1": 0.01, "b0": 0.1, "b1": 0.01}, _positive(names)
        )
    raise ValueError(f"unknown model family {family!r}")


def fit_model(
    family: str,
    observed: Trace,
    initial: ParameterVector | Mapping[str, float] | None = None,
    loss: str = "squared_error",
    F0: float | None = None,
    F_N: float | None = None,
    structure: dict | None = None,
    config: NelderMeadConfig = NelderMeadConfig(),
    predictor_dt: float = 0.05,
) -> FitResult:
    """Fit one deterministic family to an observed trace.

    Predictions come from the analytic solution (numeric fallback where it
    is excluded, at step ``predictor_dt``) evaluated on the observed grid.
    The result carries mimicry diagnostics: how far the estimate moved in
    parameter space versus how much the loss improved.
    """
    if family not in MODEL_FAMILIES:
        raise ValueError(f"unknown model family {family!r}; choose from {sorted(MODEL_FAMILIES)}")
    structure = dict(structure or {})
    structure.setdefault("t0", observed.t_start)
    F_N = observed.nominal if F_N is None else float(F_N)
    F0 = float(observed.values[0]) if F0 is None else float(F0)
    if initial is None:
        initial = default_initial(family, structure)
    elif not isinstance(initial, ParameterVector):
        names = list(initial)
        initial = ParameterVector.from_dict(dict(initial), _positive(names))
    build = MODEL_FAMILIES[family]
    if loss == "squared_error":
        loss_fn = squared_error_loss
    elif loss == "beta":
        loss_fn = beta_loss
    else:
        raise ValueError(f"unknown loss {loss!r}; choose 'squared_error' or 'beta'")

    times = observed.times

    def objective(p: ParameterVector) -> float:
        schedule = build(p, structure)
        sol = OdeSolution(schedule, F0, F_N, fallback_dt=predictor_dt)
        predicted = Trace(times, sol.sample(times), F_N, source="model")
        return loss_fn(predicted, observed)

    result = nelder_mead(objective, initial, config)
    result.extras["family"] = family
    result.extras["loss_improvement"] = result.loss_initial - result.loss
    return result
