"""Degree-sweep orchestration: build, solve, validate, cross-check.

A (method, degree) cell counts as verified only when the solver reports a
feasible solution AND the reconstructed certificate passes independent
validation; the solver-only acceptance used for reproduction comparisons is
available behind ``trust_solver``.  The sweep walks the degree plan in order
and stops at the first verified cell, then runs the simulation cross-check
on the winner.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from . import certify
from .problemio import instance_digest
from .sdp import SolveOutcome, SolverConfig, SolveStatus, solve
from .semialg import ProblemInstance
from .sim import ReachAvoidSummary, SimConfig, monte_carlo_reach_avoid
from .sosbuild import Certificate, DegreePlan, Method, build_program, reconstruct

DEFAULT_CELL_BUDGET = 600.0

# Cross-check integration settings: looser than the oracle defaults so a
# 500-trajectory run stays inside the time budget, tight enough that a safe
# trajectory is not misclassified.
SIM_CHECK_CONFIG = SimConfig(t_max=100.0, rtol=1e-6, atol=1e-9, max_step=0.05)


@dataclass
class SweepCell:
    method: str
    degree: int
    solver_status: str
    backend: str
    verified: bool
    build_time: float
    solve_time: float
    validate_time: float
    solver_iterations: int = 0
    message: str = ""
    validation: certify.ValidationReport | None = None

    def to_dict(self, include_timings: bool = True) -> dict:
        out = {
            "method": self.method,
            "degree": self.degree,
            "solver_status": self.solver_status,
            "backend": self.backend,
            "verified": self.verified,
            "solver_iterations": self.solver_iterations,
            "message": self.message,
            "validation": self.validation.to_dict() if self.validation else None,
        }
        if include_timings:
            out.update(build_time=self.build_time, solve_time=self.solve_time,
                       validate_time=self.validate_time)
        return out


@dataclass
class VerificationReport:
    instance_name: str
    instance_digest: str
    method_label: str
    cells: list[SweepCell]
    verified: bool
    verified_degree: int | None
    certificate: Certificate | None
    simulation: ReachAvoidSummary | None
    trust_solver: bool
    eps: float
    seed: int

    @property
    def verdict(self) -> str:
        if self.verified:
            return f"verified at degree {self.verified_degree}"
        max_deg = max((c.degree for c in self.cells), default=0)
        return f"not verified up to degree {max_deg}"

    def to_dict(self, include_timings: bool = True) -> dict:
        sim = None
        if self.simulation is not None:
            sim = {
                "reached": self.simulation.reached,
                "exited": self.simulation.exited,
                "timeout": self.simulation.timeout,
                "failed": self.simulation.failed,
                "min_safety_margin": self.simulation.min_safety_margin,
                "seed": self.simulation.seed,
            }
        return {
            "instance": self.instance_name,
            "digest": self.instance_digest,
            "method": self.method_label,
            "verdict": self.verdict,
            "verified": self.verified,
            "verified_degree": self.verified_degree,
            "trust_solver": self.trust_solver,
            "eps": self.eps,
            "seed": self.seed,
            "cells": [c.to_dict(include_timings) for c in self.cells],
            "simulation": sim,
            "certificate": None if self.certificate is None else {
                "method": self.certificate.method.label(),
                "degree": self.certificate.degree,
                "polynomials": {k: p.to_string()
                                for k, p in self.certificate.polynomials.items()
                                if not k.startswith("s")},
            },
        }


def run_cell(
    instance: ProblemInstance,
    method: Method,
    degree: int,
    eps: float,
    solver_config: SolverConfig,
    backend: str,
    trust_solver: bool,
    validation_samples: int,
    seed: int,
    fallback_backend: str | None = None,
) -> tuple[SweepCell, Certificate | None]:
    t0 = time.monotonic()
    problem, layout = build_program(instance, method, degree, eps)
    build_time = time.monotonic() - t0

    t0 = time.monotonic()
    outcome = solve(problem, solver_config, backend=backend)
    used_backend = backend
    if (fallback_backend is not None
            and outcome.status in (SolveStatus.ITERATION_LIMIT,
                                   SolveStatus.NUMERICAL_FAILURE)):
        retry = solve(problem, solver_config, backend=fallback_backend)
        if retry.status in (SolveStatus.OPTIMAL, SolveStatus.INFEASIBLE):
            outcome = retry
            used_backend = fallback_backend
    solve_time = time.monotonic() - t0

    cell = SweepCell(method.label(), degree, outcome.status.value, used_backend,
                     False, build_time, solve_time, 0.0,
                     solver_iterations=outcome.iterations, message=outcome.message)
    if not outcome.feasible:
        return cell, None

    certificate = reconstruct(layout, outcome.x, solver_stats={
        "iterations": outcome.iterations,
        "backend": used_backend,
        "residuals": outcome.residuals,
    })
    if trust_solver:
        cell.verified = True
        return cell, certificate

    t0 = time.monotonic()
    report = certify.validate(certificate, instance, validation_samples, seed)
    cell.validate_time = time.monotonic() - t0
    cell.validation = report
    cell.verified = report.passed
    if not report.passed:
        cell.message = (f"solver feasible but validation failed "
                        f"(residual {report.max_residual:.2e}, "
                        f"min eig {report.min_eigenvalue:.2e}, "
                        f"worst margin {min(m.worst for m in report.margins):.2e})")
    return cell, certificate if report.passed else certificate


def run_sweep(
    instance: ProblemInstance,
    method: Method,
    plan: DegreePlan | None = None,
    eps: float = 1e-6,
    solver_config: SolverConfig | None = None,
    backend: str = "builtin",
    trust_solver: bool = False,
    validation_samples: int = 10_000,
    seed: int = 0,
    sim_check: bool = True,
    sim_samples: int = 500,
    cell_time_budget: float = DEFAULT_CELL_BUDGET,
    fallback_backend: str | None = None,
    verbose: bool = False,
) -> VerificationReport:
    """Walk the degree plan until a cell verifies; cross-check the winner."""
    plan = plan or DegreePlan.sweep()
    base_config = solver_config or SolverConfig()
    if cell_time_budget is not None:
        base_config = SolverConfig(
            max_iterations=base_config.max_iterations,
            feas_tol=base_config.feas_tol,
            gap_tol=base_config.gap_tol,
            step_fraction=base_config.step_fraction,
            kkt_reg=base_config.kkt_reg,
            time_limit=cell_time_budget,
            verbose=base_config.verbose,
        )

    cells: list[SweepCell] = []
    winner: Certificate | None = None
    for degree in plan.degrees:
        try:
            cell, certificate = run_cell(instance, method, degree, eps, base_config,
                                         backend, trust_solver, validation_samples,
                                         seed, fallback_backend)
        except Exception as exc:  # per-cell failures never abort the sweep
            cell = SweepCell(method.label(), degree, "error", backend, False,
                             0.0, 0.0, 0.0, message=str(exc))
            certificate = None
        cells.append(cell)
        if verbose:
            print(f"[{instance.name}] {method.label()} degree {degree}: "
                  f"{cell.solver_status} verified={cell.verified} "
                  f"({cell.solve_time:.1f}s) {cell.message}")
        if cell.verified:
            winner = certificate
            break

    simulation = None
    if winner is not None and sim_check:
        simulation = monte_carlo_reach_avoid(instance, sim_samples,
                                             SIM_CHECK_CONFIG, seed)

    verified = winner is not None
    return VerificationReport(
        instance_name=instance.name,
        instance_digest=instance_digest(instance),
        method_label=method.label(),
        cells=cells,
        verified=verified,
        verified_degree=cells[-1].degree if verified else None,
        certificate=winner,
        simulation=simulation,
        trust_solver=trust_solver,
        eps=eps,
        seed=seed,
    )


@dataclass
class MethodComparison:
    instance_name: str
    rows: list[tuple[str, int | None]]  # (method label, minimal verified degree)
    reports: list[VerificationReport] = field(default_factory=list)

    def to_dict(self, include_timings: bool = True) -> dict:
        return {
            "instance": self.instance_name,
            "rows": [{"method": label, "verified_degree": deg}
                     for label, deg in self.rows],
            "reports": [r.to_dict(include_timings) for r in self.reports],
        }

    def table(self) -> str:
        width = max([len("method")] + [len(label) for label, _ in self.rows])
        lines = [f"{'method'.ljust(width)}  verified degree"]
        for label, deg in self.rows:
            lines.append(f"{label.ljust(width)}  {deg if deg is not None else 'not verified'}")
        return "\n".join(lines)


def compare_methods(
    instance: ProblemInstance,
    methods: list[Method],
    plan: DegreePlan | None = None,
    **sweep_kwargs,
) -> MethodComparison:
    """Run a sweep per method and tabulate the minimal verified degree."""
    rows = []
    reports = []
    for method in methods:
        report = run_sweep(instance, method, plan, **sweep_kwargs)
        rows.append((method.label(), report.verified_degree))
        reports.append(report)
    return MethodComparison(instance.name, rows, reports)
