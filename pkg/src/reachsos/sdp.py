"""Semidefinite feasibility and optimization with PSD blocks and free scalars.

Problems are given in the standard primal form

    minimize    <c, x>
    subject to  A x = b,   x = (svec(X_1), ..., svec(X_K), u),

where each X_k ranges over the PSD cone and u is unrestricted.  Symmetric
vectorization scales off-diagonal entries by sqrt(2) so that inner products
are preserved.

The built-in backend is a homogeneous self-dual primal-dual interior-point
method with Nesterov-Todd scaling and a Mehrotra predictor-corrector.  The
homogeneous embedding yields either a solution or an improving-ray
infeasibility certificate.  Free variables are handled through a saddle-point
elimination: the Schur complement over the PSD part decomposes into
independent diagonal blocks (rows interacting through a common PSD block),
and the free columns couple them through a small dense second-stage system.

An adapter to the cvxopt conelp solver provides an external cross-check
backend behind the same interface.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

_SQRT2 = math.sqrt(2.0)


# ---------------------------------------------------------------------------
# symmetric vectorization
# ---------------------------------------------------------------------------

def svec_len(p: int) -> int:
    return p * (p + 1) // 2


def svec_indices(p: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row/column index arrays and sqrt(2) scale vector for size-p svec."""
    ii, jj = [], []
    for i in range(p):
        for j in range(i, p):
            ii.append(i)
            jj.append(j)
    ii = np.array(ii, dtype=np.intp)
    jj = np.array(jj, dtype=np.intp)
    scale = np.where(ii == jj, 1.0, _SQRT2)
    return ii, jj, scale


def svec(mat: np.ndarray) -> np.ndarray:
    p = mat.shape[0]
    ii, jj, scale = svec_indices(p)
    return mat[ii, jj] * scale


def smat(vec: np.ndarray, p: int) -> np.ndarray:
    ii, jj, scale = svec_indices(p)
    out = np.zeros((p, p))
    vals = np.asarray(vec) / scale
    out[ii, jj] = vals
    out[jj, ii] = vals
    return out


class _SvecMaps:
    """Cached index arrays for batched svec/smat of one block size."""

    def __init__(self, p: int):
        self.p = p
        self.ii, self.jj, self.scale = svec_indices(p)

    def smat_batch(self, rows: np.ndarray) -> np.ndarray:
        m = rows.shape[0]
        out = np.zeros((m, self.p, self.p))
        vals = rows / self.scale
        out[:, self.ii, self.jj] = vals
        out[:, self.jj, self.ii] = vals
        return out

    def svec_batch(self, mats: np.ndarray) -> np.ndarray:
        return mats[:, self.ii, self.jj] * self.scale


# ---------------------------------------------------------------------------
# problem container
# ---------------------------------------------------------------------------

@dataclass
class SdpProblem:
    """Standard-form SDP data.

    ``a_blocks[k]`` holds the columns of the equality map acting on
    svec(X_k); ``a_free`` the columns acting on the free variables.  The
    objective defaults to zero (pure feasibility).
    """

    block_sizes: list[int]
    n_free: int
    a_blocks: list[sp.csr_matrix]
    a_free: sp.csr_matrix
    b: np.ndarray
    c: np.ndarray | None = None

    def __post_init__(self):
        if not self.block_sizes:
            raise ValueError("at least one PSD block is required")
        if any(p < 1 for p in self.block_sizes):
            raise ValueError("every block dimension must be >= 1")
        self.b = np.asarray(self.b, dtype=float)
        m = len(self.b)
        for k, (p, blk) in enumerate(zip(self.block_sizes, self.a_blocks)):
            if blk.shape != (m, svec_len(p)):
                raise ValueError(f"a_blocks[{k}] has shape {blk.shape}, "
                                 f"expected {(m, svec_len(p))}")
        if self.a_free.shape != (m, self.n_free):
            raise ValueError("a_free shape mismatch")
        if self.c is not None:
            self.c = np.asarray(self.c, dtype=float)
            if len(self.c) != self.n_cols:
                raise ValueError("objective length mismatch")
        row_nnz = self._row_nnz()
        if m and int(row_nnz.min()) == 0:
            raise ValueError("A contains an identically-zero row")

    def _row_nnz(self) -> np.ndarray:
        counts = np.zeros(len(self.b), dtype=int)
        for blk in self.a_blocks:
            counts += np.diff(blk.indptr)
        counts += np.diff(self.a_free.indptr)
        return counts

    @property
    def n_rows(self) -> int:
        return len(self.b)

    @property
    def n_cone(self) -> int:
        return sum(svec_len(p) for p in self.block_sizes)

    @property
    def n_cols(self) -> int:
        return self.n_cone + self.n_free

    def block_offsets(self) -> list[int]:
        offs, acc = [], 0
        for p in self.block_sizes:
            offs.append(acc)
            acc += svec_len(p)
        return offs

    def objective_vector(self) -> np.ndarray:
        if self.c is None:
            return np.zeros(self.n_cols)
        return self.c

    @classmethod
    def from_triplets(
        cls,
        block_sizes: list[int],
        n_free: int,
        block_triplets: list[tuple[list[int], list[int], list[float]]],
        free_triplets: tuple[list[int], list[int], list[float]],
        b: np.ndarray,
        c: np.ndarray | None = None,
    ) -> "SdpProblem":
        m = len(b)
        a_blocks = []
        for p, (rows, cols, vals) in zip(block_sizes, block_triplets):
            a_blocks.append(
                sp.csr_matrix((vals, (rows, cols)), shape=(m, svec_len(p)))
            )
        rows, cols, vals = free_triplets
        a_free = sp.csr_matrix((vals, (rows, cols)), shape=(m, n_free))
        return cls(block_sizes, n_free, a_blocks, a_free, np.asarray(b, float), c)


# ---------------------------------------------------------------------------
# outcomes
# ---------------------------------------------------------------------------

class SolveStatus(Enum):
    OPTIMAL = "feasible_optimal"
    INFEASIBLE = "infeasible_certificate"
    ITERATION_LIMIT = "iteration_limit"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass
class SolverConfig:
    """Interior-point settings.

    ``cone_shift`` solves with the PSD blocks shifted by +shift*I and maps
    the shift back out of the returned solution.  A feasible problem is then
    strictly feasible, so marginal SOS programs (whose solution Grams are
    singular) regain a central path; returned blocks may carry eigenvalues
    down to -shift, which sits far inside the certification floor.

    ``trace_cap`` bounds the total trace of the PSD blocks through one extra
    normalized row and a slack.  Sum-of-squares feasibility systems carry
    recession rays (scaling a multiplier by a square of the data), so their
    feasible sets are unbounded and the homogeneous model can stall on a
    ray; the cap restores boundedness.  An infeasibility certificate of the
    capped problem transfers to the original only when the cap-row dual is
    negligible; otherwise the outcome reports that no solution exists within
    the cap.
    """

    max_iterations: int = 200
    feas_tol: float = 1e-8
    gap_tol: float = 1e-8
    step_fraction: float = 0.98
    kkt_reg: float = 1e-9
    cone_shift: float = 1e-9
    trace_cap: float | None = None
    time_limit: float | None = None
    verbose: bool = False

    def __post_init__(self):
        if not (0.0 < self.step_fraction < 1.0):
            raise ValueError("step_fraction must be in (0, 1)")
        for name in ("feas_tol", "gap_tol", "kkt_reg"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.cone_shift < 0:
            raise ValueError("cone_shift must be nonnegative")


@dataclass
class SolveOutcome:
    status: SolveStatus
    x: np.ndarray | None  # full primal vector (cone svecs then free), scaled by 1/tau
    y: np.ndarray | None
    s: np.ndarray | None
    iterations: int
    wall_time: float
    residuals: dict
    objective: float | None = None
    dual_objective: float | None = None
    certificate: dict | None = None
    backend: str = "builtin"
    message: str = ""

    @property
    def feasible(self) -> bool:
        return self.status is SolveStatus.OPTIMAL


@dataclass
class ResidualReport:
    equality_residual: float
    min_eigenvalues: list[float]
    within: bool


def check_solution(problem: SdpProblem, x: np.ndarray,
                   feas_tol: float = 1e-8) -> ResidualReport:
    """Recompute residuals of a primal vector independently of the solver."""
    x = np.asarray(x, dtype=float)
    ax = problem.a_free @ x[problem.n_cone:]
    offsets = problem.block_offsets()
    mineigs = []
    for k, p in enumerate(problem.block_sizes):
        seg = x[offsets[k]:offsets[k] + svec_len(p)]
        ax = ax + problem.a_blocks[k] @ seg
        mineigs.append(float(np.linalg.eigvalsh(smat(seg, p)).min()))
    eq = float(np.abs(ax - problem.b).max()) if problem.n_rows else 0.0
    b_scale = 1.0 + (float(np.abs(problem.b).max()) if problem.n_rows else 0.0)
    ok = eq <= feas_tol * b_scale and all(
        lam >= -feas_tol * (1.0 + abs(lam)) for lam in mineigs
    )
    return ResidualReport(eq, mineigs, ok)


# ---------------------------------------------------------------------------
# built-in homogeneous self-dual IPM
# ---------------------------------------------------------------------------

class _Blocks:
    """Per-block views and cached index maps for the iterate vectors."""

    def __init__(self, problem: SdpProblem):
        self.sizes = problem.block_sizes
        self.offsets = problem.block_offsets()
        self.maps = [_SvecMaps(p) for p in self.sizes]

    def seg(self, vec: np.ndarray, k: int) -> np.ndarray:
        p = self.sizes[k]
        return vec[self.offsets[k]:self.offsets[k] + svec_len(p)]

    def to_mats(self, vec: np.ndarray) -> list[np.ndarray]:
        return [smat(self.seg(vec, k), p) for k, p in enumerate(self.sizes)]


def _identity_svec(blocks: _Blocks) -> np.ndarray:
    out = np.zeros(blocks.offsets[-1] + svec_len(blocks.sizes[-1]))
    for k, p in enumerate(blocks.sizes):
        out[blocks.offsets[k]:blocks.offsets[k] + svec_len(p)] = svec(np.eye(p))
    return out


def _row_components(problem: SdpProblem) -> tuple[np.ndarray, int]:
    """Partition rows into groups linked by a shared PSD block (union-find)."""
    m = problem.n_rows
    parent = np.arange(m)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for blk in problem.a_blocks:
        rows = np.unique(blk.tocoo().row)
        if len(rows) > 1:
            r0 = find(rows[0])
            for r in rows[1:]:
                parent[find(r)] = r0
    labels = np.array([find(i) for i in range(m)])
    _, labels = np.unique(labels, return_inverse=True)
    return labels, labels.max() + 1 if m else 0


class _NTScaling:
    """Nesterov-Todd scaling factors for all blocks at one iterate."""

    def __init__(self, blocks: _Blocks, xs: np.ndarray, s: np.ndarray):
        self.blocks = blocks
        self.R = []
        self.Rinv = []
        self.lam = []
        self.chol_x = []
        self.chol_s = []
        for k, p in enumerate(blocks.sizes):
            X = smat(blocks.seg(xs, k), p)
            S = smat(blocks.seg(s, k), p)
            L1 = _chol_with_jitter(X)
            L2 = _chol_with_jitter(S)
            U, sig, Vt = np.linalg.svd(L2.T @ L1)
            if sig.min() <= 0:
                raise np.linalg.LinAlgError("NT scaling: singular scaled spectrum")
            R = L1 @ Vt.T * (sig ** -0.5)
            L1inv = sla.solve_triangular(L1, np.eye(p), lower=True)
            Rinv = (sig[:, None] ** 0.5) * (Vt @ L1inv)
            self.R.append(R)
            self.Rinv.append(Rinv)
            self.lam.append(sig)
            self.chol_x.append(L1)
            self.chol_s.append(L2)

    def apply_w2(self, vec: np.ndarray) -> np.ndarray:
        """svec image of M -> W M W with W = R R^T, applied blockwise."""
        out = np.empty_like(vec)
        for k, p in enumerate(self.blocks.sizes):
            R = self.R[k]
            M = smat(self.blocks.seg(vec, k), p)
            WMW = R @ (R.T @ M @ R) @ R.T
            sl = slice(self.blocks.offsets[k], self.blocks.offsets[k] + svec_len(p))
            out[sl] = svec(WMW)
        return out


def _chol_with_jitter(M: np.ndarray) -> np.ndarray:
    """Cholesky with a relative-jitter retry; the iterate can brush the cone
    boundary to within rounding error late in a marginal solve."""
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        scale = max(float(np.trace(M)) / M.shape[0], 1e-300)
        for jitter in (1e-14, 1e-11, 1e-8):
            try:
                return np.linalg.cholesky(M + jitter * scale * np.eye(M.shape[0]))
            except np.linalg.LinAlgError:
                continue
    raise np.linalg.LinAlgError("cone block lost positive definiteness")


def _max_step_psd(chol_lower: np.ndarray, dmat: np.ndarray) -> float:
    """Largest alpha with X + alpha*dX psd, given X = L L^T."""
    tmp = sla.solve_triangular(chol_lower, dmat, lower=True)
    tmp = sla.solve_triangular(chol_lower, tmp.T, lower=True)
    sigma_min = float(np.linalg.eigvalsh(0.5 * (tmp + tmp.T)).min())
    if sigma_min >= 0.0:
        return math.inf
    return -1.0 / sigma_min


class _KKT:
    """Factorized Schur system for one iterate.

    M = A_s (W (.) W) A_s^T decomposes into diagonal blocks over row
    components; free columns are folded in through the dense second-stage
    matrix S_u = A_u^T M^{-1} A_u.
    """

    def __init__(self, problem: SdpProblem, blocks: _Blocks, scaling: _NTScaling,
                 comp_labels: np.ndarray, n_comp: int, reg: float):
        self.problem = problem
        self.blocks = blocks
        self.comp_rows = [np.where(comp_labels == c)[0] for c in range(n_comp)]
        self.local = {}
        for c, rows in enumerate(self.comp_rows):
            for j, r in enumerate(rows):
                self.local[r] = (c, j)
        self.ghat: list[tuple[int, np.ndarray, np.ndarray]] = []
        mats = [np.zeros((len(rows), len(rows))) for rows in self.comp_rows]
        for k, p in enumerate(problem.block_sizes):
            blk = problem.a_blocks[k]
            rows_k = np.unique(blk.tocoo().row)
            if len(rows_k) == 0:
                continue
            dense = np.asarray(blk[rows_k].todense())
            maps = blocks.maps[k]
            T = maps.smat_batch(dense)
            R = scaling.R[k]
            G = np.matmul(R.T, np.matmul(T, R))
            ghat = maps.svec_batch(G)
            comp = self.local[rows_k[0]][0]
            loc = np.array([self.local[r][1] for r in rows_k])
            mats[comp][np.ix_(loc, loc)] += ghat @ ghat.T
            self.ghat.append((comp, loc, ghat))
        self.chol = []
        for c, M in enumerate(mats):
            if M.shape[0] == 0:
                self.chol.append(None)
                continue
            self.chol.append(self._factor(M, reg))
        self.a_free = problem.a_free
        nf = problem.n_free
        if nf:
            self.F = self._solve_m(np.asarray(self.a_free.todense()))
            su = np.asarray((self.a_free.T @ self.F)) + reg * np.eye(nf)
            self.su_chol = sla.cho_factor(su, lower=True)
        else:
            self.F = np.zeros((problem.n_rows, 0))
            self.su_chol = None

    @staticmethod
    def _factor(M: np.ndarray, reg: float):
        # static perturbation first; escalate relative to the matrix scale
        # only when floating-point loss leaves the Gram matrix indefinite
        scale = max(1.0, float(np.abs(np.diag(M)).max()))
        for bump in (reg, reg * scale * 1e3, reg * scale * 1e6):
            try:
                return sla.cho_factor(M + bump * np.eye(M.shape[0]), lower=True)
            except np.linalg.LinAlgError:
                continue
        raise np.linalg.LinAlgError("KKT block not positive definite after regularization")

    def _apply_m(self, v: np.ndarray) -> np.ndarray:
        out = np.zeros_like(v)
        for comp, loc, ghat in self.ghat:
            rows = self.comp_rows[comp][loc]
            seg = v[rows] if v.ndim == 1 else v[rows, :]
            contrib = ghat @ (ghat.T @ seg)
            if v.ndim == 1:
                out[rows] += contrib
            else:
                out[rows, :] += contrib
        return out

    def _solve_m(self, rhs: np.ndarray) -> np.ndarray:
        out = np.zeros_like(rhs, dtype=float)
        for c, rows in enumerate(self.comp_rows):
            if len(rows) == 0:
                continue
            seg = rhs[rows] if rhs.ndim == 1 else rhs[rows, :]
            out[rows] = sla.cho_solve(self.chol[c], seg)
        return out

    def solve_saddle(self, r1: np.ndarray, r2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Solve [M, A_u; A_u^T, 0] [dy; du] = [r1; r2] with one refinement."""
        dy, du = self._solve_once(r1, r2)
        res1 = r1 - self._apply_m(dy) - (self.a_free @ du if len(du) else 0.0)
        res2 = r2 - (self.a_free.T @ dy if len(du) else np.zeros(0))
        cy, cu = self._solve_once(res1, res2)
        return dy + cy, du + cu

    def _solve_once(self, r1, r2):
        t1 = self._solve_m(r1)
        if self.su_chol is None:
            return t1, np.zeros(0)
        du = sla.cho_solve(self.su_chol, self.a_free.T @ t1 - r2)
        dy = t1 - self.F @ du
        return dy, du


def _augment_trace_cap(problem: SdpProblem, cap: float) -> SdpProblem:
    """Append the normalized row sum(tr X_k)/cap + t = 1 with slack t >= 0."""
    m = problem.n_rows
    a_blocks = []
    for k, p in enumerate(problem.block_sizes):
        row = sp.csr_matrix(svec(np.eye(p))[None, :] / cap)
        a_blocks.append(sp.vstack([problem.a_blocks[k], row]).tocsr())
    slack_col = sp.csr_matrix(([1.0], ([m], [0])), shape=(m + 1, 1))
    a_blocks.append(slack_col)
    a_free = sp.vstack([problem.a_free, sp.csr_matrix((1, problem.n_free))]).tocsr()
    b = np.concatenate([problem.b, [1.0]])
    c = None
    if problem.c is not None:
        c = np.concatenate([problem.c[:problem.n_cone], [0.0],
                            problem.c[problem.n_cone:]])
    return SdpProblem(problem.block_sizes + [1], problem.n_free, a_blocks,
                      a_free, b, c)


def _solve_builtin(problem: SdpProblem, config: SolverConfig) -> SolveOutcome:
    if config.trace_cap is not None:
        ncone = problem.n_cone
        augmented = _augment_trace_cap(problem, config.trace_cap)
        inner = _solve_builtin_core(augmented, config)
        if inner.x is not None:
            inner.x = np.concatenate([inner.x[:ncone], inner.x[ncone + 1:]])
        if inner.y is not None and len(inner.y) == problem.n_rows + 1:
            inner.y = inner.y[:-1]
        if inner.status is SolveStatus.INFEASIBLE and inner.certificate:
            ray = inner.certificate.get("y")
            if ray is not None and len(ray) == problem.n_rows + 1:
                cap_dual = float(ray[-1])
                body_scale = float(np.abs(ray[:-1]).max()) if problem.n_rows else 0.0
                inner.certificate["y"] = ray[:-1]
                if abs(cap_dual) > 1e-6 * (1.0 + body_scale):
                    inner.certificate["within_cap_only"] = True
                    inner.message += (" (certificate rules out solutions within "
                                      f"the trace cap {config.trace_cap:g} only)")
        if inner.s is not None and len(inner.s) > problem.n_cone:
            inner.s = np.concatenate([inner.s[:ncone], inner.s[ncone + 1:]])
        return inner
    return _solve_builtin_core(problem, config)


def _solve_builtin_core(problem: SdpProblem, config: SolverConfig) -> SolveOutcome:
    t_start = time.monotonic()
    blocks = _Blocks(problem)
    m = problem.n_rows
    nf = problem.n_free
    ncone = problem.n_cone
    c_full = problem.objective_vector()
    c_s, c_u = c_full[:ncone], c_full[ncone:]
    a_free = problem.a_free
    shift_vec = _identity_svec(blocks) * config.cone_shift
    b_shift = np.zeros(m)
    for k in range(len(problem.block_sizes)):
        b_shift += problem.a_blocks[k] @ blocks.seg(shift_vec, k)
    b = problem.b + b_shift
    nu = sum(problem.block_sizes)
    comp_labels, n_comp = _row_components(problem)
    nnz = problem._row_nnz()
    free_nnz = np.diff(a_free.indptr)
    if m and np.any(nnz - free_nnz == 0):
        raise ValueError("every equality row must touch at least one PSD block")

    def a_cone(v: np.ndarray) -> np.ndarray:
        out = np.zeros(m)
        for k in range(len(problem.block_sizes)):
            out += problem.a_blocks[k] @ blocks.seg(v, k)
        return out

    def at_cone(y: np.ndarray) -> np.ndarray:
        out = np.zeros(ncone)
        for k, p in enumerate(problem.block_sizes):
            sl = slice(blocks.offsets[k], blocks.offsets[k] + svec_len(p))
            out[sl] = problem.a_blocks[k].T @ y
        return out

    # interior start: scaled identity blocks, unit tau/kappa
    eta_x = max(1.0, float(np.abs(b).max()) if m else 1.0) ** 0.5
    eta_s = max(1.0, float(np.abs(c_full).max()) if len(c_full) else 1.0) ** 0.5
    ident = _identity_svec(blocks)
    xs = ident * eta_x
    s = ident * eta_s
    u = np.zeros(nf)
    y = np.zeros(m)
    tau, kappa = 1.0, 1.0

    b_scale = 1.0 + (float(np.abs(b).max()) if m else 0.0)
    c_scale = 1.0 + (float(np.abs(c_full).max()) if len(c_full) else 0.0)
    stalls = 0
    # for a pure feasibility problem the primal residual alone decides: the
    # returned point is cone-interior by construction, and marginal problems
    # may never close the complementarity gap
    feasibility_only = not np.any(c_full)

    def residual_snapshot():
        pres = float(np.abs(a_cone(xs / tau) + a_free @ (u / tau) - b).max()) if m else 0.0
        dres_c = float(np.abs(-at_cone(y / tau) + c_s - s / tau).max()) if ncone else 0.0
        dres_f = float(np.abs(-(a_free.T @ (y / tau)) + c_u).max()) if nf else 0.0
        pobj = float(c_s @ (xs / tau - shift_vec) + (c_u @ (u / tau) if nf else 0.0))
        dobj = float(problem.b @ (y / tau)) if m else 0.0
        gap = float(xs @ s) / tau**2
        return {
            "primal_residual": pres / b_scale,
            "dual_residual": max(dres_c, dres_f) / c_scale,
            "gap": gap / (1.0 + abs(pobj) + abs(dobj)),
            "primal_objective": pobj,
            "dual_objective": dobj,
        }

    def infeasibility_certificate(tol_scale: float):
        """Farkas ray from the iterate, normalized so the improving inner
        product is one.  A violation of delta then rules out every feasible
        point of trace below 1/delta, so only tiny violations are accepted
        as certificates."""
        by = float(b @ y) if m else 0.0
        if by > 1e-12:
            yn = y / by
            img = -at_cone(yn)
            cone_viol = 0.0
            for k, p in enumerate(blocks.sizes):
                lam = float(np.linalg.eigvalsh(smat(blocks.seg(img, k), p)).min())
                cone_viol = max(cone_viol, -min(lam, 0.0))
            free_viol = float(np.abs(a_free.T @ yn).max()) if nf else 0.0
            if max(cone_viol, free_viol) <= tol_scale:
                return {"kind": "primal_infeasible", "y": yn,
                        "farkas_residual": max(cone_viol, free_viol),
                        "ray_norm": float(np.abs(yn).max())}
        cx = float(c_s @ xs + (c_u @ u if nf else 0.0))
        if cx < -1e-12:
            xn = np.concatenate([xs, u]) / (-cx)
            ray_res = float(np.abs(a_cone(xn[:ncone]) + a_free @ xn[ncone:]).max()) if m else 0.0
            if ray_res <= tol_scale:
                return {"kind": "dual_infeasible", "x": xn,
                        "ray_residual": ray_res,
                        "ray_norm": float(np.abs(xn).max())}
        return None

    def exit_outcome(status, it, extra=None, cert=None):
        snap = residual_snapshot()
        wall = time.monotonic() - t_start
        if status is SolveStatus.OPTIMAL:
            x_full = np.concatenate([xs / tau - shift_vec, u / tau])
            return SolveOutcome(status, x_full, y / tau, s / tau, it, wall, snap,
                                objective=snap["primal_objective"],
                                dual_objective=snap["dual_objective"],
                                message=extra or "")
        if status in (SolveStatus.NUMERICAL_FAILURE, SolveStatus.ITERATION_LIMIT):
            # a stalled feasibility solve may already hold a feasible point
            if feasibility_only and snap["primal_residual"] <= config.feas_tol:
                x_full = np.concatenate([xs / tau - shift_vec, u / tau])
                return SolveOutcome(SolveStatus.OPTIMAL, x_full, y / tau, s / tau,
                                    it, wall, snap,
                                    objective=snap["primal_objective"],
                                    dual_objective=snap["dual_objective"],
                                    message=f"feasible point at stall ({extra})")
            # the iterate often carries a usable Farkas ray by the time the
            # scaling degenerates; accept it at a mildly relaxed tolerance
            late_cert = infeasibility_certificate(10 * config.feas_tol)
            if late_cert is not None:
                return SolveOutcome(SolveStatus.INFEASIBLE, None, y.copy(), s.copy(),
                                    it, wall, snap, certificate=late_cert,
                                    message=f"{late_cert['kind']} certificate "
                                            f"(after {extra or status.value})")
        return SolveOutcome(status, None, y.copy(), s.copy(), it, wall, snap,
                            certificate=cert, message=extra or "")

    mu0 = (float(xs @ s) + tau * kappa) / (nu + 1)

    for it in range(config.max_iterations):
        if config.time_limit is not None and time.monotonic() - t_start > config.time_limit:
            return exit_outcome(SolveStatus.ITERATION_LIMIT, it, "time limit reached")

        mu = (float(xs @ s) + tau * kappa) / (nu + 1)
        snap = residual_snapshot()
        if feasibility_only:
            if snap["primal_residual"] <= config.feas_tol:
                return exit_outcome(SolveStatus.OPTIMAL, it)
        elif (snap["primal_residual"] <= config.feas_tol
                and snap["dual_residual"] <= config.feas_tol
                and snap["gap"] <= config.gap_tol):
            return exit_outcome(SolveStatus.OPTIMAL, it)

        # infeasibility certificates from the homogeneous iterate.  The tests
        # mirror the conelp criteria: normalize the candidate ray so that the
        # improving inner product is one, then require the Farkas residual to
        # be small in absolute terms (the iterate's own cone variable keeps
        # the test honest for feasible problems with large solutions).
        if mu < 0.9 * mu0 or it > 5:
            cert = infeasibility_certificate(config.feas_tol)
            if cert is not None:
                return exit_outcome(SolveStatus.INFEASIBLE, it,
                                    f"{cert['kind']} certificate", cert)

        try:
            scaling = _NTScaling(blocks, xs, s)
            kkt = _KKT(problem, blocks, scaling, comp_labels, n_comp, config.kkt_reg)
        except np.linalg.LinAlgError as exc:
            return exit_outcome(SolveStatus.NUMERICAL_FAILURE, it, f"KKT failure: {exc}")

        rp = a_cone(xs) + (a_free @ u if nf else 0.0) - b * tau
        rd = -at_cone(y) + c_s * tau - s
        rdu = -(a_free.T @ y) + c_u * tau if nf else np.zeros(0)
        rg = (float(b @ y) if m else 0.0) - float(c_s @ xs) - (float(c_u @ u) if nf else 0.0) - kappa

        wc = scaling.apply_w2(c_s)
        u1 = a_cone(wc) + b
        dy1, du1 = kkt.solve_saddle(u1, c_u.copy())
        v1 = b - a_cone(wc)
        cwc = float(c_s @ wc)

        def newton_solve(rp_t, rd_t, rdu_t, rg_t, w_tilde, d_tk):
            """One solve of the reduced Newton system with general targets:
            A dx + A_u du - b dtau = rp_t; -A'dy + c dtau - ds = rd_t;
            -A_u'dy + c_u dtau = rdu_t; b'dy - c'dx - c_u'du - dkappa = rg_t;
            dx + W ds W = w_tilde (scaled complementarity); kappa dtau +
            tau dkappa = d_tk."""
            wrd = scaling.apply_w2(rd_t)
            u2 = rp_t - a_cone(w_tilde) - a_cone(wrd)
            dy2, du2 = kkt.solve_saddle(u2, -rdu_t if nf else np.zeros(0))
            denom = float(v1 @ dy1) + cwc + kappa / tau - (float(c_u @ du1) if nf else 0.0)
            numer = (rg_t + float(c_s @ w_tilde) + float(c_s @ wrd) + d_tk / tau
                     - float(v1 @ dy2) + (float(c_u @ du2) if nf else 0.0))
            dtau = numer / denom
            dy = dy1 * dtau + dy2
            du = du1 * dtau + du2 if nf else np.zeros(0)
            ds = -at_cone(dy) + c_s * dtau - rd_t
            dxs = w_tilde - scaling.apply_w2(ds)
            dkappa = (d_tk - kappa * dtau) / tau
            return dxs, du, dy, ds, dtau, dkappa

        def directions(w_tilde: np.ndarray, d_tk: float, refinements: int = 2):
            """Newton direction for the current residuals, polished by full
            KKT iterative refinement (the inner elimination loses digits on
            ill-conditioned scalings)."""
            targets = (-rp, -rd, -rdu if nf else np.zeros(0), -rg, w_tilde, d_tk)
            delta = newton_solve(*targets)
            for _ in range(refinements):
                dxs, du, dy, ds, dtau, dkappa = delta
                e_p = targets[0] - (a_cone(dxs) + (a_free @ du if nf else 0.0) - b * dtau)
                e_d = targets[1] - (-at_cone(dy) + c_s * dtau - ds)
                e_du = (targets[2] - (-(a_free.T @ dy) + c_u * dtau)) if nf else np.zeros(0)
                e_g = targets[3] - ((float(b @ dy) if m else 0.0)
                                    - float(c_s @ dxs) - (float(c_u @ du) if nf else 0.0)
                                    - dkappa)
                e_c = targets[4] - (dxs + scaling.apply_w2(ds))
                err = max(np.abs(e_p).max() if m else 0.0, np.abs(e_d).max(),
                          np.abs(e_du).max() if nf else 0.0, abs(e_g),
                          np.abs(e_c).max())
                if err <= 1e-14 * (1.0 + abs(dtau)):
                    break
                corr = newton_solve(e_p, e_d, e_du, e_g, e_c, 0.0)
                delta = tuple(a + b_ for a, b_ in zip(delta, corr))
            return delta

        def max_step(dxs, ds, dtau, dkappa):
            alpha = math.inf
            if dtau < 0:
                alpha = min(alpha, -tau / dtau)
            if dkappa < 0:
                alpha = min(alpha, -kappa / dkappa)
            for k, p in enumerate(blocks.sizes):
                alpha = min(alpha, _max_step_psd(scaling.chol_x[k],
                                                 smat(blocks.seg(dxs, k), p)))
                alpha = min(alpha, _max_step_psd(scaling.chol_s[k],
                                                 smat(blocks.seg(ds, k), p)))
            return alpha

        # predictor: drive straight to the boundary of the cone
        aff = directions(-xs, -tau * kappa)
        alpha_aff = min(1.0, max_step(*_pick(aff)))
        dxs_a, du_a, dy_a, ds_a, dtau_a, dkap_a = aff
        gap = float(xs @ s) + tau * kappa
        gap_aff = (float((xs + alpha_aff * dxs_a) @ (s + alpha_aff * ds_a))
                   + (tau + alpha_aff * dtau_a) * (kappa + alpha_aff * dkap_a))
        sigma = min(max((max(gap_aff, 0.0) / gap) ** 3, 1e-8), 1.0 - 1e-8)

        # corrector: recenter and cancel the second-order cross terms
        w_parts = []
        for k, p in enumerate(blocks.sizes):
            lam = scaling.lam[k]
            dxh = scaling.Rinv[k] @ smat(blocks.seg(dxs_a, k), p) @ scaling.Rinv[k].T
            dsh = scaling.R[k].T @ smat(blocks.seg(ds_a, k), p) @ scaling.R[k]
            cross = 0.5 * (dxh @ dsh + dsh @ dxh)
            rhs = -np.diag(lam**2) + sigma * mu * np.eye(p) - cross
            denom_mat = 0.5 * (lam[:, None] + lam[None, :])
            d_tilde = rhs / denom_mat
            w_parts.append(svec(scaling.R[k] @ d_tilde @ scaling.R[k].T))
        w_tilde = np.concatenate(w_parts)
        d_tk = -tau * kappa + sigma * mu - dtau_a * dkap_a

        dxs, du, dy, ds, dtau, dkappa = directions(w_tilde, d_tk)
        alpha = config.step_fraction * max_step(dxs, ds, dtau, dkappa)
        alpha = min(1.0, alpha)
        if not math.isfinite(alpha) or alpha <= 1e-12:
            return exit_outcome(SolveStatus.NUMERICAL_FAILURE, it, "step length collapsed")

        xs = xs + alpha * dxs
        s = s + alpha * ds
        y = y + alpha * dy
        if nf:
            u = u + alpha * du
        tau += alpha * dtau
        kappa += alpha * dkappa
        if tau <= 0 or kappa < 0 or not np.isfinite(xs).all() or not np.isfinite(s).all():
            return exit_outcome(SolveStatus.NUMERICAL_FAILURE, it, "iterate left the cone")

        new_mu = (float(xs @ s) + tau * kappa) / (nu + 1)
        stalls = stalls + 1 if new_mu > 0.9999 * mu else 0
        if stalls >= 20:
            return exit_outcome(SolveStatus.ITERATION_LIMIT, it + 1, "progress stalled")
        if config.verbose:
            snap = residual_snapshot()
            print(f"  it {it:3d}  mu {new_mu:9.2e}  alpha {alpha:6.3f}  "
                  f"pres {snap['primal_residual']:8.1e}  dres {snap['dual_residual']:8.1e}  "
                  f"gap {snap['gap']:8.1e}  tau {tau:8.2e}  kappa {kappa:8.2e}")

    return exit_outcome(SolveStatus.ITERATION_LIMIT, config.max_iterations)


def _pick(direction):
    dxs, du, dy, ds, dtau, dkappa = direction
    return dxs, ds, dtau, dkappa


# ---------------------------------------------------------------------------
# cvxopt adapter
# ---------------------------------------------------------------------------

def _solve_cvxopt(problem: SdpProblem, config: SolverConfig) -> SolveOutcome:
    """External backend: map to cvxopt conelp with all variables free and the
    PSD blocks imposed through cone slacks."""
    from cvxopt import matrix as cvx_matrix
    from cvxopt import solvers as cvx_solvers
    from cvxopt import spmatrix as cvx_spmatrix

    t_start = time.monotonic()
    n = problem.n_cols
    offsets = problem.block_offsets()

    g_rows, g_cols, g_vals = [], [], []
    row_base = 0
    for k, p in enumerate(problem.block_sizes):
        ii, jj, scale = svec_indices(p)
        for idx in range(svec_len(p)):
            col = offsets[k] + idx
            i, j = int(ii[idx]), int(jj[idx])
            v = -1.0 / scale[idx]
            g_rows.append(row_base + j * p + i)
            g_cols.append(col)
            g_vals.append(v)
            if i != j:
                g_rows.append(row_base + i * p + j)
                g_cols.append(col)
                g_vals.append(v)
        row_base += p * p
    G = cvx_spmatrix(g_vals, g_rows, g_cols, size=(row_base, n))
    h = cvx_matrix(np.zeros(row_base))

    a_full = sp.hstack(problem.a_blocks + [problem.a_free]).tocoo()
    A = cvx_spmatrix(a_full.data.tolist(), a_full.row.tolist(), a_full.col.tolist(),
                     size=(problem.n_rows, n))
    bvec = cvx_matrix(problem.b)
    cvec = cvx_matrix(problem.objective_vector())

    options = {
        "show_progress": config.verbose,
        "maxiters": config.max_iterations,
        "abstol": config.gap_tol,
        "reltol": config.gap_tol,
        "feastol": config.feas_tol,
    }
    try:
        sol = cvx_solvers.conelp(cvec, G, h, dims={"l": 0, "q": [], "s": list(problem.block_sizes)},
                                 A=A, b=bvec, options=options)
    except (ValueError, ArithmeticError, ZeroDivisionError) as exc:
        return SolveOutcome(SolveStatus.NUMERICAL_FAILURE, None, None, None, 0,
                            time.monotonic() - t_start, {}, backend="cvxopt",
                            message=f"conelp error: {exc}")
    wall = time.monotonic() - t_start
    status = sol["status"]
    iterations = sol.get("iterations", 0)
    if status == "optimal":
        x = np.array(sol["x"]).ravel()
        rep = check_solution(problem, x, config.feas_tol * 100)
        residuals = {"primal_residual": rep.equality_residual,
                     "min_eigenvalue": min(rep.min_eigenvalues)}
        return SolveOutcome(SolveStatus.OPTIMAL, x, np.array(sol["y"]).ravel(),
                            None, iterations, wall, residuals,
                            objective=float(sol["primal objective"]),
                            dual_objective=float(sol["dual objective"]),
                            backend="cvxopt")
    if status == "primal infeasible":
        yray = np.array(sol["y"]).ravel() if sol["y"] is not None else None
        cert = {"kind": "primal_infeasible", "y": yray}
        return SolveOutcome(SolveStatus.INFEASIBLE, None, yray, None, iterations,
                            wall, {}, certificate=cert, backend="cvxopt",
                            message="primal infeasibility certificate")
    if status == "dual infeasible":
        xray = np.array(sol["x"]).ravel() if sol["x"] is not None else None
        cert = {"kind": "dual_infeasible", "x": xray}
        return SolveOutcome(SolveStatus.INFEASIBLE, None, None, None, iterations,
                            wall, {}, certificate=cert, backend="cvxopt",
                            message="dual infeasibility certificate")
    return SolveOutcome(SolveStatus.ITERATION_LIMIT, None, None, None, iterations,
                        wall, {}, backend="cvxopt", message=f"conelp status: {status}")


_BACKENDS = {"builtin": _solve_builtin, "cvxopt": _solve_cvxopt}


def solve(problem: SdpProblem, config: SolverConfig | None = None,
          backend: str = "builtin") -> SolveOutcome:
    """Solve an SDP with the selected backend (built-in IPM by default)."""
    config = config or SolverConfig()
    try:
        runner = _BACKENDS[backend]
    except KeyError:
        raise ValueError(f"unknown backend {backend!r}; expected one of {sorted(_BACKENDS)}") from None
    return runner(problem, config)


# ---------------------------------------------------------------------------
# textual dump (shared with sosbuild for cross-solver debugging)
# ---------------------------------------------------------------------------

def write_dump(problem: SdpProblem, path: str) -> None:
    """Write the sparse dump: blocks, free count, then b/c/A triplets.

    Columns are indexed in the svec-with-sqrt2 layout, cone blocks first,
    free variables after.
    """
    lines = ["SDPDUMP 1"]
    lines.append("blocks " + " ".join(str(p) for p in problem.block_sizes))
    lines.append(f"free {problem.n_free}")
    lines.append(f"rows {problem.n_rows}")
    for i, v in enumerate(problem.b):
        if v != 0.0:
            lines.append(f"b {i} {float(v)!r}")
    c = problem.objective_vector()
    for i, v in enumerate(c):
        if v != 0.0:
            lines.append(f"c {i} {float(v)!r}")
    offsets = problem.block_offsets()
    for k, blk in enumerate(problem.a_blocks):
        coo = blk.tocoo()
        for r, cidx, v in zip(coo.row, coo.col, coo.data):
            lines.append(f"A {r} {offsets[k] + cidx} {float(v)!r}")
    coo = problem.a_free.tocoo()
    ncone = problem.n_cone
    for r, cidx, v in zip(coo.row, coo.col, coo.data):
        lines.append(f"A {r} {ncone + cidx} {float(v)!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_dump(path: str) -> SdpProblem:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("SDPDUMP"):
        raise ValueError("not an SDP dump file")
    block_sizes: list[int] = []
    n_free = 0
    m = 0
    b_entries, c_entries, a_entries = [], [], []
    for ln in lines[1:]:
        parts = ln.split()
        tag = parts[0]
        if tag == "blocks":
            block_sizes = [int(v) for v in parts[1:]]
        elif tag == "free":
            n_free = int(parts[1])
        elif tag == "rows":
            m = int(parts[1])
        elif tag == "b":
            b_entries.append((int(parts[1]), float(parts[2])))
        elif tag == "c":
            c_entries.append((int(parts[1]), float(parts[2])))
        elif tag == "A":
            a_entries.append((int(parts[1]), int(parts[2]), float(parts[3])))
        else:
            raise ValueError(f"unknown dump line {ln!r}")
    b = np.zeros(m)
    for i, v in b_entries:
        b[i] = v
    ncone = sum(svec_len(p) for p in block_sizes)
    c = None
    if c_entries:
        c = np.zeros(ncone + n_free)
        for i, v in c_entries:
            c[i] = v
    offsets, acc = [], 0
    for p in block_sizes:
        offsets.append(acc)
        acc += svec_len(p)
    block_trips = [([], [], []) for _ in block_sizes]
    free_trip: tuple[list, list, list] = ([], [], [])
    for r, col, v in a_entries:
        if col >= ncone:
            free_trip[0].append(r)
            free_trip[1].append(col - ncone)
            free_trip[2].append(v)
        else:
            k = max(i for i, off in enumerate(offsets) if off <= col)
            block_trips[k][0].append(r)
            block_trips[k][1].append(col - offsets[k])
            block_trips[k][2].append(v)
    return SdpProblem.from_triplets(block_sizes, n_free, block_trips, free_trip, b, c)
