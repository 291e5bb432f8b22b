"""Trajectory integration and Monte-Carlo reach-avoid checking.

This module is the dynamical oracle: it integrates the ODE with an embedded
Dormand-Prince 5(4) pair, localizes target-entry and safe-set-exit events by
bisection, classifies trajectories, and estimates the discounted value of an
initial state empirically.  Leaving the safe set is realized as termination
(the frozen continuation of the switched system never changes the
classification, so stopping is equivalent).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .poly import Polynomial, PolyVector
from .semialg import ProblemInstance, SamplingError, sample

# Dormand-Prince 5(4) tableau; the fifth-order solution is propagated and the
# embedded fourth-order difference drives step control.
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)

_EVENT_BISECTIONS = 80


class TrajectoryClass(Enum):
    REACHED = "reached_target_safely"
    EXITED = "exited_safe_set"
    TIMEOUT = "timeout"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass
class SimConfig:
    """Integrator settings; all entries must be positive.

    ``max_step`` bounds the step so events spanning small sets are not
    skipped.  ``fixed_step`` disables adaptivity entirely and marches with a
    constant step; it exists for convergence-order measurements.
    """

    t_max: float = 100.0
    rtol: float = 1e-8
    atol: float = 1e-10
    max_step: float = 0.1
    event_tol: float = 1e-9
    fixed_step: float | None = None
    max_steps: int = 5_000_000

    def __post_init__(self):
        for name in ("t_max", "rtol", "atol", "max_step", "event_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class Trajectory:
    """A simulated path with its reach-avoid classification.

    On REACHED, ``hit_time`` is the localized first entry into the target
    set (the final state satisfies max_j g_j within the event tolerance) and
    every earlier state lies strictly inside the safe set.
    """

    times: np.ndarray
    states: np.ndarray
    classification: TrajectoryClass
    hit_time: float | None
    min_safety_margin: float


@dataclass
class ValueEstimate:
    value: float
    inconclusive: bool


@dataclass
class ReachAvoidSummary:
    reached: int
    exited: int
    timeout: int
    failed: int
    min_safety_margin: float
    seed: int


def compile_polynomials(polys: list[Polynomial]):
    """Build a fast evaluator ``f(x) -> list[float]`` for a list of polynomials.

    Generates a plain arithmetic expression per polynomial and compiles it
    once; the per-call cost matters because the stepper evaluates the field
    millions of times.
    """
    n = polys[0].dimension
    args = ", ".join(f"x{i}" for i in range(n))
    bodies = []
    for p in polys:
        if p.is_zero():
            bodies.append("0.0")
            continue
        terms = []
        for mono, coeff in p.terms.items():
            factors = [repr(coeff)]
            for i, e in enumerate(mono):
                factors.extend([f"x{i}"] * e)
            terms.append("*".join(factors))
        bodies.append(" + ".join(terms))
    src = f"lambda {args}: ({', '.join(bodies)},)" if len(polys) > 1 else \
        f"lambda {args}: ({bodies[0]},)"
    return eval(src, {"__builtins__": {}})  # noqa: S307 - generated from floats only


def _dp_step(fn, y, h):
    """One Dormand-Prince step: returns (y5, err_vector, k1) without control."""
    n = len(y)
    k = [fn(*y)]
    for s in range(1, 7):
        a = _A[s]
        ys = [y[i] + h * sum(a[j] * k[j][i] for j in range(s)) for i in range(n)]
        k.append(fn(*ys))
    y5 = [y[i] + h * sum(_B5[j] * k[j][i] for j in range(7)) for i in range(n)]
    err = [h * sum((_B5[j] - _B4[j]) * k[j][i] for j in range(7)) for i in range(n)]
    return y5, err, k[0]


def _partial_step(fn, y, dt):
    y5, _, _ = _dp_step(fn, y, dt)
    return y5


def integrate(instance: ProblemInstance, x0, config: SimConfig | None = None) -> Trajectory:
    """Integrate from x0 until target entry, safe-set exit, or the horizon.

    Events are detected by endpoint sign checks on each accepted step and
    localized by bisecting partial steps from the step start; the earlier of
    the two events decides the classification.
    """
    config = config or SimConfig()
    n = instance.dimension
    x0 = [float(v) for v in x0]
    if len(x0) != n or not all(math.isfinite(v) for v in x0):
        raise ValueError(f"initial state must be a finite vector of length {n}")

    f_fn = compile_polynomials(list(instance.f))
    h_fn = compile_polynomials([instance.safe.h])
    g_fn = compile_polynomials(list(instance.target.constraints))

    def exit_val(y):
        return h_fn(*y)[0]

    def reach_val(y):
        return max(g_fn(*y))

    times = [0.0]
    states = [list(x0)]
    worst_h = exit_val(x0)

    if reach_val(x0) < 0.0:
        return Trajectory(np.array(times), np.array(states), TrajectoryClass.REACHED,
                          0.0, -worst_h)
    if worst_h >= 0.0:
        return Trajectory(np.array(times), np.array(states), TrajectoryClass.EXITED,
                          None, -worst_h)

    t = 0.0
    y = list(x0)
    fixed = config.fixed_step
    h_step = fixed if fixed is not None else min(config.max_step, 1e-3)
    min_h = 1e-14

    def finish(cls, hit=None):
        return Trajectory(np.array(times), np.array(states), cls, hit, -worst_h)

    for _ in range(config.max_steps):
        if t >= config.t_max:
            return finish(TrajectoryClass.TIMEOUT)
        h_step = min(h_step, config.t_max - t)
        y_new, err, _ = _dp_step(f_fn, y, h_step)
        if not all(math.isfinite(v) for v in y_new):
            if fixed is not None:
                return finish(TrajectoryClass.NUMERICAL_FAILURE)
            h_step *= 0.25
            if h_step < min_h:
                return finish(TrajectoryClass.NUMERICAL_FAILURE)
            continue

        if fixed is None:
            scale = [config.atol + config.rtol * max(abs(y[i]), abs(y_new[i]))
                     for i in range(n)]
            err_norm = math.sqrt(sum((err[i] / scale[i]) ** 2 for i in range(n)) / n)
            if err_norm > 1.0:
                h_step = max(min_h, h_step * max(0.2, 0.9 * err_norm ** -0.2))
                if h_step <= min_h:
                    return finish(TrajectoryClass.NUMERICAL_FAILURE)
                continue
            next_h = h_step * min(5.0, max(0.2, 0.9 * (err_norm + 1e-16) ** -0.2))
            next_h = min(next_h, config.max_step)
        else:
            next_h = fixed

        exited = exit_val(y_new) >= 0.0
        reached = reach_val(y_new) < 0.0
        if exited or reached:
            t_exit = _locate(f_fn, y, h_step, exit_val, rising=True,
                             tol=config.event_tol) if exited else math.inf
            t_reach = _locate(f_fn, y, h_step, reach_val, rising=False,
                              tol=config.event_tol) if reached else math.inf
            dt = min(t_exit, t_reach)
            y_event = _partial_step(f_fn, y, dt)
            times.append(t + dt)
            states.append(y_event)
            worst_h = max(worst_h, exit_val(y_event))
            if t_reach <= t_exit:
                return finish(TrajectoryClass.REACHED, hit=t + dt)
            return finish(TrajectoryClass.EXITED)

        t += h_step
        y = y_new
        times.append(t)
        states.append(list(y))
        worst_h = max(worst_h, exit_val(y))
        h_step = next_h

    return finish(TrajectoryClass.NUMERICAL_FAILURE)


def _locate(fn, y0, h, event_fn, rising: bool, tol: float) -> float:
    """Bisect the first crossing of event_fn within a step of length h.

    ``rising`` selects the direction: the event fires when the value reaches
    0 from below (rising) or from above.  Returns the offset dt in (0, h].
    """
    lo, hi = 0.0, h
    v_hi = event_fn(_partial_step(fn, y0, hi))
    for _ in range(_EVENT_BISECTIONS):
        if abs(v_hi) <= tol:
            break
        mid = 0.5 * (lo + hi)
        v_mid = event_fn(_partial_step(fn, y0, mid))
        fired = v_mid >= 0.0 if rising else v_mid < 0.0
        if fired:
            hi, v_hi = mid, v_mid
        else:
            lo = mid
    return hi


def monte_carlo_reach_avoid(
    instance: ProblemInstance,
    n_samples: int,
    config: SimConfig | None = None,
    seed: int = 0,
) -> ReachAvoidSummary:
    """Integrate from sampled initial states and tally classifications.

    Any exit from the safe set is a counterexample to the reach-avoid
    property; timeouts are inconclusive, not failures.
    """
    if n_samples <= 0:
        return ReachAvoidSummary(0, 0, 0, 0, math.inf, seed)
    points, _ = sample(instance.initial, n_samples, instance.bounding_box, seed)
    counts = {cls: 0 for cls in TrajectoryClass}
    margin = math.inf
    for x0 in points:
        traj = integrate(instance, x0, config)
        counts[traj.classification] += 1
        margin = min(margin, traj.min_safety_margin)
    return ReachAvoidSummary(
        reached=counts[TrajectoryClass.REACHED],
        exited=counts[TrajectoryClass.EXITED],
        timeout=counts[TrajectoryClass.TIMEOUT],
        failed=counts[TrajectoryClass.NUMERICAL_FAILURE],
        min_safety_margin=margin,
        seed=seed,
    )


def estimate_value(
    instance: ProblemInstance,
    x0,
    beta: float,
    config: SimConfig | None = None,
) -> ValueEstimate:
    """Empirical discounted value of one initial state.

    Returns exp(-beta * tau) when the trajectory reaches the target at first
    hitting time tau (the indicator value for beta = 0) and 0 otherwise.
    A timeout yields 0 flagged as inconclusive, since the horizon truncates
    an unbounded-time property.
    """
    if beta < 0:
        raise ValueError("beta must be non-negative")
    traj = integrate(instance, x0, config)
    if traj.classification is TrajectoryClass.REACHED:
        return ValueEstimate(math.exp(-beta * traj.hit_time), False)
    if traj.classification is TrajectoryClass.TIMEOUT:
        return ValueEstimate(0.0, True)
    return ValueEstimate(0.0, False)
