"""Trajectory integration, event localization, and value estimates."""

import math

import numpy as np
import pytest

from reachsos.poly import PolyVector, parse_polynomial
from reachsos.problemio import load_bundled_problem
from reachsos.semialg import BasicOpenSet, ProblemInstance, SafeSet
from reachsos.sim import (
    SimConfig,
    TrajectoryClass,
    estimate_value,
    integrate,
    monte_carlo_reach_avoid,
)


def linear_decay():
    """1-D x' = -x with target {x^2 < 0.01} and safe set {x^2 < 4}."""
    return ProblemInstance(
        dimension=1,
        f=PolyVector([parse_polynomial("-x1", 1)]),
        safe=SafeSet(parse_polynomial("x1^2 - 4", 1)),
        initial=BasicOpenSet([parse_polynomial("x1^2 - 1", 1)]),
        target=BasicOpenSet([parse_polynomial("x1^2 - 0.01", 1)]),
        bounding_box=((-2.0, 2.0),),
        name="linear-decay",
    )


def frozen_field():
    return ProblemInstance(
        dimension=1,
        f=PolyVector([parse_polynomial("0", 1)]),
        safe=SafeSet(parse_polynomial("x1^2 - 4", 1)),
        initial=BasicOpenSet([parse_polynomial("x1^2 - 1", 1)]),
        target=BasicOpenSet([parse_polynomial("(x1 - 10)^2 - 0.01", 1)]),
        bounding_box=((-2.0, 2.0),),
        name="frozen",
    )


class TestIntegrate:
    def test_linear_decay_hit_time(self):
        # x(t) = e^{-t} crosses |x| = 0.1 at t = ln 10
        traj = integrate(linear_decay(), [1.0], SimConfig())
        assert traj.classification is TrajectoryClass.REACHED
        assert traj.hit_time == pytest.approx(math.log(10.0), abs=1e-6)

    def test_equilibrium_timeout(self):
        traj = integrate(frozen_field(), [1.0], SimConfig(t_max=5.0))
        assert traj.classification is TrajectoryClass.TIMEOUT
        assert traj.hit_time is None

    def test_vdp_initial_point_reaches(self):
        inst = load_bundled_problem("vdp")
        traj = integrate(inst, [0.7, 0.1], SimConfig(rtol=1e-7, atol=1e-9))
        assert traj.classification is TrajectoryClass.REACHED
        # pre-hit states stay strictly inside the safe set
        h = inst.safe.h
        assert max(h.eval(state) for state in traj.states[:-1]) < 0

    def test_event_localization_tolerance(self):
        inst = linear_decay()
        config = SimConfig()
        traj = integrate(inst, [1.0], config)
        g = inst.target.constraints[0]
        assert abs(g.eval(traj.states[-1])) <= config.event_tol

    def test_start_inside_target(self):
        inst = linear_decay()
        traj = integrate(inst, [0.05], SimConfig())
        assert traj.classification is TrajectoryClass.REACHED
        assert traj.hit_time == 0.0

    def test_start_outside_safe(self):
        inst = linear_decay()
        traj = integrate(inst, [3.0], SimConfig())
        assert traj.classification is TrajectoryClass.EXITED

    def test_exit_detection(self):
        # x' = +x grows out of the safe set
        inst = ProblemInstance(
            dimension=1,
            f=PolyVector([parse_polynomial("x1", 1)]),
            safe=SafeSet(parse_polynomial("x1^2 - 4", 1)),
            initial=BasicOpenSet([parse_polynomial("x1^2 - 1", 1)]),
            target=BasicOpenSet([parse_polynomial("(x1 + 10)^2 - 0.01", 1)]),
            bounding_box=((-2.0, 2.0),),
        )
        traj = integrate(inst, [1.0], SimConfig(t_max=10.0))
        assert traj.classification is TrajectoryClass.EXITED
        assert abs(inst.safe.h.eval(traj.states[-1])) <= 1e-9

    def test_order_of_convergence(self):
        # fixed-step order check: halving the step must cut the end-state
        # error by at least 16x for a 4/5 pair
        inst = linear_decay()
        horizon = 1.0
        errors = []
        for step in (0.1, 0.05):
            config = SimConfig(t_max=horizon, fixed_step=step,
                               rtol=1.0, atol=1.0)
            traj = integrate(frozen_horizon(inst), [1.0], config)
            errors.append(abs(traj.states[-1][0] - math.exp(-horizon)))
        assert errors[0] / errors[1] >= 16.0


def frozen_horizon(inst):
    """Same dynamics with an unreachable target, so integration runs to t_max."""
    return ProblemInstance(
        dimension=inst.dimension,
        f=inst.f,
        safe=SafeSet(parse_polynomial("x1^2 - 100", 1)),
        initial=inst.initial,
        target=BasicOpenSet([parse_polynomial("(x1 - 50)^2 - 0.01", 1)]),
        bounding_box=((-10.0, 10.0),),
    )


class TestMonteCarlo:
    def test_linear_decay_all_reach(self):
        summary = monte_carlo_reach_avoid(linear_decay(), 50, SimConfig(), seed=1)
        assert summary.reached == 50
        assert summary.exited == 0

    def test_frozen_field_all_timeout(self):
        summary = monte_carlo_reach_avoid(frozen_field(), 20,
                                          SimConfig(t_max=2.0), seed=1)
        assert summary.reached == 0
        assert summary.timeout == 20

    def test_initial_set_straddling_boundary(self):
        # modeling error: initial set pokes outside the safe set
        inst = ProblemInstance(
            dimension=1,
            f=PolyVector([parse_polynomial("0", 1)]),
            safe=SafeSet(parse_polynomial("x1^2 - 1", 1)),
            initial=BasicOpenSet([parse_polynomial("(x1 - 1)^2 - 0.25", 1)]),
            target=BasicOpenSet([parse_polynomial("(x1 + 10)^2 - 0.01", 1)]),
            bounding_box=((-2.0, 2.0),),
        )
        summary = monte_carlo_reach_avoid(inst, 30, SimConfig(t_max=1.0), seed=2)
        assert summary.exited > 0

    def test_zero_samples(self):
        summary = monte_carlo_reach_avoid(linear_decay(), 0, SimConfig(), seed=0)
        assert summary.reached == summary.exited == summary.timeout == 0

    def test_deterministic(self):
        a = monte_carlo_reach_avoid(linear_decay(), 20, SimConfig(), seed=5)
        b = monte_carlo_reach_avoid(linear_decay(), 20, SimConfig(), seed=5)
        assert (a.reached, a.exited, a.timeout) == (b.reached, b.exited, b.timeout)
        assert a.min_safety_margin == b.min_safety_margin


class TestEstimateValue:
    def test_already_in_target(self):
        est = estimate_value(linear_decay(), [0.05], beta=0.0)
        assert est.value == 1.0 and not est.inconclusive

    def test_discounted_hit(self):
        # tau = ln 10, so the value at beta = 1 is 1/10
        est = estimate_value(linear_decay(), [1.0], beta=1.0)
        assert est.value == pytest.approx(0.1, abs=1e-6)

    def test_zero_on_exit(self):
        inst = ProblemInstance(
            dimension=1,
            f=PolyVector([parse_polynomial("x1", 1)]),
            safe=SafeSet(parse_polynomial("x1^2 - 4", 1)),
            initial=BasicOpenSet([parse_polynomial("x1^2 - 1", 1)]),
            target=BasicOpenSet([parse_polynomial("(x1 + 10)^2 - 0.01", 1)]),
            bounding_box=((-2.0, 2.0),),
        )
        est = estimate_value(inst, [1.0], beta=0.5, config=SimConfig(t_max=10.0))
        assert est.value == 0.0 and not est.inconclusive

    def test_timeout_inconclusive(self):
        est = estimate_value(frozen_field(), [1.0], beta=0.5,
                             config=SimConfig(t_max=1.0))
        assert est.value == 0.0 and est.inconclusive

    def test_monotone_in_beta(self):
        inst = linear_decay()
        values = [estimate_value(inst, [1.0], beta=b).value
                  for b in (0.0, 0.5, 1.0, 2.0)]
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_negative_beta_rejected(self):
        with pytest.raises(ValueError):
            estimate_value(linear_decay(), [1.0], beta=-1.0)
