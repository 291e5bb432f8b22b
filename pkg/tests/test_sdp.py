"""Solver micro-oracles: known optima, certificates, round trips."""

import math

import numpy as np
import pytest
import scipy.sparse as sp

from reachsos.sdp import (
    SdpProblem,
    SolverConfig,
    SolveStatus,
    check_solution,
    read_dump,
    smat,
    solve,
    svec,
    svec_len,
    write_dump,
)

R2 = math.sqrt(2.0)


def trace_one_problem():
    """min X11 s.t. trace(X) = 1, X in S^2_+; optimum 0 at X = diag(0, 1)."""
    return SdpProblem.from_triplets(
        [2], 0, [([0, 0], [0, 2], [1.0, 1.0])], ([], [], []),
        np.array([1.0]), c=np.array([1.0, 0.0, 0.0]))


def scalar_infeasible():
    """x >= 0 with x = -1."""
    return SdpProblem.from_triplets(
        [1], 0, [([0], [0], [1.0])], ([], [], []), np.array([-1.0]))


class TestSvec:
    def test_round_trip(self):
        rng = np.random.default_rng(0)
        for p in (1, 2, 3, 7, 12):
            sym = rng.normal(size=(p, p))
            sym = 0.5 * (sym + sym.T)
            back = smat(svec(sym), p)
            assert np.abs(back - sym).max() <= 1e-12

    def test_inner_product_preserved(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            p = 5
            a = rng.normal(size=(p, p)); a = a + a.T
            b = rng.normal(size=(p, p)); b = b + b.T
            frob = float(np.tensordot(a, b))
            assert svec(a) @ svec(b) == pytest.approx(frob, rel=1e-12, abs=1e-12)


class TestMicroOracles:
    def test_trace_one_minimization(self):
        out = solve(trace_one_problem())
        assert out.status is SolveStatus.OPTIMAL
        assert out.objective == pytest.approx(0.0, abs=1e-7)
        X = smat(out.x[:3], 2)
        assert X[1, 1] == pytest.approx(1.0, abs=1e-6)

    def test_scalar_infeasible_certificate(self):
        out = solve(scalar_infeasible())
        assert out.status is SolveStatus.INFEASIBLE
        assert out.certificate["kind"] == "primal_infeasible"
        # improving ray: b'y = 1 with -A'y in the cone
        y = out.certificate["y"]
        assert float(np.array([-1.0]) @ y) == pytest.approx(1.0)
        assert -y[0] >= -1e-9

    def test_weak_duality_at_optimum(self):
        out = solve(trace_one_problem())
        assert out.objective >= out.dual_objective - 1e-6

    def test_deterministic(self):
        a = solve(trace_one_problem())
        b = solve(trace_one_problem())
        assert a.iterations == b.iterations
        assert np.array_equal(a.x, b.x)


class TestRandomFeasible:
    def test_constructed_feasible_instances(self):
        rng = np.random.default_rng(20240818)
        for trial in range(20):
            p = int(rng.integers(2, 11))
            m = int(rng.integers(1, 2 * p))
            N = svec_len(p)
            A = rng.normal(size=(m, N))
            M0 = rng.normal(size=(p, p))
            X0 = M0 @ M0.T + 0.2 * np.eye(p)
            b = A @ svec(X0)
            prob = SdpProblem([p], 0, [sp.csr_matrix(A)], sp.csr_matrix((m, 0)), b)
            out = solve(prob)
            assert out.status is SolveStatus.OPTIMAL, f"trial {trial}: {out.message}"
            report = check_solution(prob, out.x)
            assert report.within, f"trial {trial}: {report}"

    def test_check_solution_exact_point(self):
        prob = trace_one_problem()
        x = svec(np.diag([0.0, 1.0]))
        report = check_solution(prob, x)
        assert report.equality_residual <= 1e-12
        assert min(report.min_eigenvalues) >= -1e-12

    def test_check_solution_perturbation(self):
        prob = trace_one_problem()
        x = svec(np.diag([0.0, 1.0]))
        x[0] += 1e-3
        report = check_solution(prob, x)
        assert report.equality_residual == pytest.approx(1e-3, rel=1e-6)


class TestFreeVariables:
    def test_free_variable_solution(self):
        # X11 + u = 2, X22 - u = 0, minimize trace: optimum 2 for any split
        prob = SdpProblem.from_triplets(
            [2], 1, [([0, 1], [0, 2], [1.0, 1.0])],
            ([0, 1], [0, 0], [1.0, -1.0]),
            np.array([2.0, 0.0]), c=np.array([1.0, 0.0, 1.0, 0.0]))
        out = solve(prob)
        assert out.status is SolveStatus.OPTIMAL
        assert out.objective == pytest.approx(2.0, abs=1e-6)
        X = smat(out.x[:3], 2)
        u = out.x[3]
        assert X[0, 0] + u == pytest.approx(2.0, abs=1e-7)
        assert X[1, 1] - u == pytest.approx(0.0, abs=1e-7)


class TestBackends:
    @pytest.mark.parametrize("backend", ["builtin", "cvxopt"])
    def test_trace_one(self, backend):
        out = solve(trace_one_problem(), backend=backend)
        assert out.status is SolveStatus.OPTIMAL
        assert out.objective == pytest.approx(0.0, abs=1e-6)
        assert out.backend == backend

    @pytest.mark.parametrize("backend", ["builtin", "cvxopt"])
    def test_infeasible(self, backend):
        out = solve(scalar_infeasible(), backend=backend)
        assert out.status is SolveStatus.INFEASIBLE

    def test_unknown_backend(self):
        with pytest.raises(ValueError, match="unknown backend"):
            solve(trace_one_problem(), backend="mosek")


class TestValidation:
    def test_zero_row_rejected(self):
        with pytest.raises(ValueError, match="zero row"):
            SdpProblem.from_triplets(
                [2], 0, [([0], [0], [1.0])], ([], [], []), np.array([1.0, 0.0]))

    def test_bad_block_dimension(self):
        with pytest.raises(ValueError):
            SdpProblem.from_triplets([0], 0, [([], [], [])], ([], [], []),
                                     np.array([]))


class TestDump:
    def test_round_trip(self, tmp_path):
        prob = SdpProblem.from_triplets(
            [2, 1], 2,
            [([0, 1], [0, 2], [1.0, -2.0]), ([1], [0], [0.5])],
            ([0, 1], [0, 1], [3.0, 4.0]),
            np.array([1.0, 2.0]), c=np.array([1.0, 0, 0, 0, 0.5, 0.25]))
        path = tmp_path / "prob.sdp"
        write_dump(prob, str(path))
        back = read_dump(str(path))
        assert back.block_sizes == prob.block_sizes
        assert back.n_free == prob.n_free
        assert np.array_equal(back.b, prob.b)
        assert np.array_equal(back.objective_vector(), prob.objective_vector())
        for a, b in zip(prob.a_blocks + [prob.a_free], back.a_blocks + [back.a_free]):
            assert (a != b).nnz == 0

    def test_solve_after_round_trip(self, tmp_path):
        path = tmp_path / "t1.sdp"
        write_dump(trace_one_problem(), str(path))
        out = solve(read_dump(str(path)))
        assert out.status is SolveStatus.OPTIMAL
        assert out.objective == pytest.approx(0.0, abs=1e-7)
