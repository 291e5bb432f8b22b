"""Compile reach-avoid constraint families into standard-form SDPs.

Each verification method is a list of sum-of-squares membership identities
over decision polynomials (certificate polynomials, free multipliers on the
safe-set boundary, and SOS multipliers tied to the set descriptions).  Every
identity is matched coefficient-by-coefficient against a Gram form
z(x)^T Q z(x); the matching produces the linear equality rows, the Gram
matrices become PSD blocks, and the free polynomial coefficients become
unrestricted scalars.

Degrees follow one shared sweep degree d: free polynomials range over the
full coefficient basis of degree d, SOS multipliers are Gram forms over the
basis of degree d/2, and each identity's own Gram block is sized to the
maximum degree appearing in its expanded target so the matching is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .poly import Monomial, Polynomial, PolyVector, lie_derivative, monomial_basis
from .sdp import SdpProblem, smat, svec_len
from .semialg import ProblemInstance, sample

_SQRT2 = math.sqrt(2.0)

DEFAULT_EPS = 1e-6

# Sampling budget and floor for the alpha-template admissibility probe.
_ALPHA_CHECK_SAMPLES = 10_000
_ALPHA_CHECK_MARGIN = -1e-9


class MethodKind(Enum):
    PRAJNA = "prajna"
    EXP = "exp"
    ASYM = "asym"
    COMBINED = "combined"
    GENERAL = "general"


@dataclass(frozen=True)
class Method:
    """A verification method selection with its parameters.

    ``beta`` is the exponential decrease rate (exp and combined only);
    ``alpha_multiplier`` is the fixed factor m with alpha(x) = m(x) * v(x)
    (general only) and must be nonnegative on the closure of the safe set.
    """

    kind: MethodKind
    beta: float | None = None
    alpha_multiplier: Polynomial | None = None

    def __post_init__(self):
        if self.kind in (MethodKind.EXP, MethodKind.COMBINED):
            if self.beta is None or self.beta <= 0:
                raise ValueError(f"method {self.kind.value!r} requires beta > 0")
        elif self.beta is not None:
            raise ValueError(f"method {self.kind.value!r} does not take beta")
        if self.kind is MethodKind.GENERAL:
            if self.alpha_multiplier is None:
                raise ValueError("method 'general' requires an alpha multiplier")
        elif self.alpha_multiplier is not None:
            raise ValueError(f"method {self.kind.value!r} does not take an alpha multiplier")

    def label(self) -> str:
        if self.kind in (MethodKind.EXP, MethodKind.COMBINED):
            return f"{self.kind.value}(beta={self.beta:g})"
        if self.kind is MethodKind.GENERAL:
            return f"general(m={self.alpha_multiplier.to_string()})"
        return self.kind.value


@dataclass
class DegreePlan:
    """Ordered even certificate degrees for the sweep."""

    degrees: list[int]

    def __post_init__(self):
        if not self.degrees:
            raise ValueError("degree plan is empty")
        if any(d % 2 or d < 2 for d in self.degrees):
            raise ValueError("degrees must be even and >= 2")
        if any(b <= a for a, b in zip(self.degrees, self.degrees[1:])):
            raise ValueError("degrees must be strictly increasing")

    @classmethod
    def sweep(cls, max_degree: int = 20) -> "DegreePlan":
        return cls(list(range(2, max_degree + 1, 2)))


@dataclass
class FreePolyInfo:
    name: str
    basis: list[Monomial]
    # column index per basis monomial within the free segment; None marks a
    # coefficient that appears in no constraint (e.g. the constant term of a
    # polynomial entering only through its gradient) and is pinned to zero
    columns: list[int | None]


@dataclass
class GramInfo:
    name: str
    block_index: int
    basis: list[Monomial]


@dataclass
class IdentityInfo:
    """One SOS membership line of the compiled program."""

    name: str
    gram: str
    multipliers: list[tuple[str, Polynomial]]  # +s(x) * factor(x) terms
    fixed: Polynomial  # the constant data part of the target (holds the eps term)
    row_start: int
    row_count: int
    scale: float


@dataclass
class ProgramLayout:
    """Symbol table mapping decision objects to SDP variable slices.

    ``axis_scales`` records the box normalization x_i = w_i * x~_i applied
    before compilation; reconstruction maps every decision polynomial and
    Gram block back to original coordinates.
    """

    method: Method
    degree: int
    eps: float
    dimension: int
    free_polys: dict[str, FreePolyInfo]
    grams: dict[str, GramInfo]
    identities: list[IdentityInfo]
    n_free: int
    block_sizes: list[int]
    axis_scales: tuple[float, ...]


@dataclass
class GramBlock:
    basis: list[Monomial]
    matrix: np.ndarray

    def expand(self, dimension: int) -> Polynomial:
        """The polynomial z(x)^T Q z(x)."""
        terms: dict[Monomial, float] = {}
        n = len(self.basis)
        for a in range(n):
            for bid in range(a, n):
                mono = tuple(x + y for x, y in zip(self.basis[a], self.basis[bid]))
                coeff = self.matrix[a, bid] * (1.0 if a == bid else 2.0)
                terms[mono] = terms.get(mono, 0.0) + coeff
        return Polynomial(dimension, terms)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix).min())


@dataclass
class Certificate:
    """Solved decision polynomials of one (method, degree) cell."""

    method: Method
    degree: int
    eps: float
    polynomials: dict[str, Polynomial]
    gram_blocks: dict[str, GramBlock]
    solver_stats: dict = field(default_factory=dict)

    @property
    def v(self) -> Polynomial:
        """The guidance polynomial whose positive region is reported (v1 + v2
        for the combined method)."""
        if self.method.kind is MethodKind.COMBINED:
            return self.polynomials["v1"] + self.polynomials["v2"]
        return self.polynomials["v"]


# ---------------------------------------------------------------------------
# identity specifications per method
# ---------------------------------------------------------------------------

@dataclass
class _FreeTerm:
    poly: str
    # operator applied to a coefficient monomial before it enters the target
    op: "callable"


@dataclass
class _IdentitySpec:
    name: str
    fixed: Polynomial
    free_terms: list[_FreeTerm]
    multipliers: list[tuple[str, Polynomial]]


def _neg_h(h: Polynomial):
    return lambda mono_poly: -(h * mono_poly)


def _method_free_polys(method: Method, split_boundary: bool) -> list[str]:
    if method.kind is MethodKind.PRAJNA:
        return ["v", "q"]
    if method.kind is MethodKind.EXP:
        return ["v", "p"]
    if method.kind in (MethodKind.ASYM, MethodKind.GENERAL):
        return ["v", "w", "p"]
    names = ["v1", "v2", "w"]
    names += ["p1", "p2"] if split_boundary else ["p"]
    return names


def _identity_specs(n: int, f: PolyVector, h: Polynomial, ls, gs,
                    method: Method, eps: float, split_boundary: bool,
                    alpha_m: Polynomial | None) -> list[_IdentitySpec]:
    zero = Polynomial.zero(n)
    minus_eps = Polynomial.constant(n, -eps)

    ident = lambda sign: (lambda mp: sign * mp)
    lie = lambda mp: lie_derivative(mp, f)
    lie_minus_beta = lambda mp: lie_derivative(mp, f) - method.beta * mp
    times_neg_h = _neg_h(h)

    def init_multipliers(tag="s0"):
        return [(f"{tag},{i + 1}", ls[i]) for i in range(len(ls))]

    def hj_multipliers(base: int, j: int):
        return [(f"s{base},{j + 1}", h), (f"s{base + 1},{j + 1}", -gs[j])]

    specs: list[_IdentitySpec] = []
    kind = method.kind

    if kind is MethodKind.PRAJNA:
        specs.append(_IdentitySpec("initial", zero,
                                   [_FreeTerm("v", ident(-1.0))], init_multipliers()))
        for j in range(len(gs)):
            specs.append(_IdentitySpec(
                f"derivative[{j + 1}]", minus_eps,
                [_FreeTerm("v", lambda mp: -lie_derivative(mp, f))],
                hj_multipliers(1, j)))
        specs.append(_IdentitySpec("boundary", minus_eps,
                                   [_FreeTerm("v", ident(1.0)),
                                    _FreeTerm("q", times_neg_h)], []))
        return specs

    if kind is MethodKind.EXP:
        specs.append(_IdentitySpec("initial", minus_eps,
                                   [_FreeTerm("v", ident(1.0))], init_multipliers()))
        for j in range(len(gs)):
            specs.append(_IdentitySpec(f"derivative[{j + 1}]", zero,
                                       [_FreeTerm("v", lie_minus_beta)],
                                       hj_multipliers(1, j)))
        specs.append(_IdentitySpec("boundary", zero,
                                   [_FreeTerm("v", ident(-1.0)),
                                    _FreeTerm("p", times_neg_h)], []))
        return specs

    if kind in (MethodKind.ASYM, MethodKind.GENERAL):
        if kind is MethodKind.ASYM:
            derivative_op = lie
        else:
            derivative_op = lambda mp: lie_derivative(mp, f) - alpha_m * mp
        specs.append(_IdentitySpec("initial", minus_eps,
                                   [_FreeTerm("v", ident(1.0))], init_multipliers()))
        for j in range(len(gs)):
            specs.append(_IdentitySpec(f"derivative[{j + 1}]", zero,
                                       [_FreeTerm("v", derivative_op)],
                                       hj_multipliers(1, j)))
        for j in range(len(gs)):
            specs.append(_IdentitySpec(f"coupling[{j + 1}]", zero,
                                       [_FreeTerm("w", lie), _FreeTerm("v", ident(-1.0))],
                                       hj_multipliers(3, j)))
        specs.append(_IdentitySpec("boundary", zero,
                                   [_FreeTerm("v", ident(-1.0)),
                                    _FreeTerm("p", times_neg_h)], []))
        return specs

    # combined: asymptotic family on v1, exponential family on v2, shared w
    p1 = "p1" if split_boundary else "p"
    p2 = "p2" if split_boundary else "p"
    specs.append(_IdentitySpec("initial", minus_eps,
                               [_FreeTerm("v1", ident(1.0)), _FreeTerm("v2", ident(1.0))],
                               init_multipliers()))
    for j in range(len(gs)):
        specs.append(_IdentitySpec(f"derivative[{j + 1}]", zero,
                                   [_FreeTerm("v1", lie)], hj_multipliers(1, j)))
    for j in range(len(gs)):
        specs.append(_IdentitySpec(f"coupling[{j + 1}]", zero,
                                   [_FreeTerm("w", lie), _FreeTerm("v1", ident(-1.0))],
                                   hj_multipliers(3, j)))
    for j in range(len(gs)):
        specs.append(_IdentitySpec(f"exp_derivative[{j + 1}]", zero,
                                   [_FreeTerm("v2",
                                              lambda mp: lie_derivative(mp, f) - method.beta * mp)],
                                   hj_multipliers(5, j)))
    specs.append(_IdentitySpec("boundary_v1", zero,
                               [_FreeTerm("v1", ident(-1.0)),
                                _FreeTerm(p1, times_neg_h)], []))
    specs.append(_IdentitySpec("boundary_v2", zero,
                               [_FreeTerm("v2", ident(-1.0)),
                                _FreeTerm(p2, times_neg_h)], []))
    return specs


# ---------------------------------------------------------------------------
# coefficient matching
# ---------------------------------------------------------------------------

def gram_pairs(basis: list[Monomial]):
    """Yield (svec_index, product monomial, row coefficient) for z^T Q z.

    The coefficient is expressed against the sqrt(2)-scaled svec coordinate:
    1 on the diagonal, sqrt(2) off it (where z^T Q z picks up 2 Q_ab).
    """
    idx = 0
    n = len(basis)
    for a in range(n):
        for b in range(a, n):
            mono = tuple(x + y for x, y in zip(basis[a], basis[b]))
            yield idx, mono, (1.0 if a == b else _SQRT2)
            idx += 1


def expand_identity(target: Polynomial, basis: list[Monomial]):
    """Equality rows matching a fixed target against one Gram block.

    Returns a list of (monomial, [(svec_index, coefficient)], rhs) covering
    every monomial producible by the basis; the rhs is the target coefficient.
    """
    if not basis:
        raise ValueError("empty Gram basis")
    max_deg = 2 * max(sum(m) for m in basis)
    matched = monomial_basis(target.dimension, max_deg)
    rows = {mono: [] for mono in matched}
    for idx, mono, coeff in gram_pairs(basis):
        rows[mono].append((idx, coeff))
    return [(mono, entries, target.coefficient(mono))
            for mono, entries in rows.items()]


def substitute_scaling(p: Polynomial, scales, inverse: bool = False) -> Polynomial:
    """Apply the diagonal substitution x_i -> w_i * x_i (or its inverse)."""
    terms = {}
    for mono, coeff in p.terms.items():
        factor = 1.0
        for w, e in zip(scales, mono):
            if e:
                factor *= (1.0 / w if inverse else w) ** e
        terms[mono] = coeff * factor
    return Polynomial(p.dimension, terms)


def _scaled_data(instance: ProblemInstance):
    """Box-normalized problem data: substituting x_i = w_i x~_i maps the
    bounding box into the unit box, which keeps high-degree Gram systems
    well conditioned.  Feasibility at any degree is unchanged."""
    scales = tuple(max(abs(lo), abs(hi), 1e-12) for lo, hi in instance.bounding_box)
    f = PolyVector([substitute_scaling(fi, scales) * (1.0 / w)
                    for fi, w in zip(instance.f, scales)])
    h = substitute_scaling(instance.safe.h, scales)
    ls = tuple(substitute_scaling(p, scales) for p in instance.initial.constraints)
    gs = tuple(substitute_scaling(p, scales) for p in instance.target.constraints)
    return scales, f, h, ls, gs


def check_alpha_multiplier(instance: ProblemInstance, m_poly: Polynomial,
                           seed: int = 1234) -> float:
    """Worst sampled value of the alpha factor over the closure of the safe
    set; admissible templates stay above the -1e-9 floor."""
    rng_points, _ = sample(instance.safe, _ALPHA_CHECK_SAMPLES,
                           instance.bounding_box, seed)
    values = m_poly.eval_many(rng_points)
    return float(values.min())


def build_program(
    instance: ProblemInstance,
    method: Method,
    degree: int,
    eps: float = DEFAULT_EPS,
    objective: str = "feasibility",
    split_boundary_multiplier: bool = False,
    skip_alpha_check: bool = False,
    row_scaling: bool = True,
) -> tuple[SdpProblem, ProgramLayout]:
    """Compile one (instance, method, degree) cell into an SDP.

    Emits the method's SOS identities with all decision polynomials at the
    shared degree; returns the solver-ready problem and the symbol table
    needed to reconstruct a certificate from a solution vector.
    """
    if degree < 2 or degree % 2:
        raise ValueError(f"degree must be even and >= 2, got {degree}")
    if eps <= 0:
        raise ValueError("eps must be positive")
    if objective not in ("feasibility", "volume"):
        raise ValueError(f"unknown objective {objective!r}")
    if method.kind is MethodKind.GENERAL and not skip_alpha_check:
        worst = check_alpha_multiplier(instance, method.alpha_multiplier)
        if worst < _ALPHA_CHECK_MARGIN:
            raise ValueError(
                f"alpha multiplier is negative on the safe set (worst sampled "
                f"value {worst:.3e}); it must be nonnegative on closure(X)")

    n = instance.dimension
    scales, f_sc, h_sc, ls_sc, gs_sc = _scaled_data(instance)
    alpha_sc = None
    if method.alpha_multiplier is not None:
        alpha_sc = substitute_scaling(method.alpha_multiplier, scales)
    coeff_basis = monomial_basis(n, degree)
    mult_basis = monomial_basis(n, degree // 2)
    specs = _identity_specs(n, f_sc, h_sc, ls_sc, gs_sc, method, eps,
                            split_boundary_multiplier, alpha_sc)

    free_names = _method_free_polys(method, split_boundary_multiplier)
    provisional_start = {name: i * len(coeff_basis) for i, name in enumerate(free_names)}

    # influence polynomials: image of each coefficient monomial under each
    # identity's linear operator, computed once per (identity, poly)
    influence: dict[tuple[int, str], list[Polynomial]] = {}
    for spec_idx, spec in enumerate(specs):
        for term in spec.free_terms:
            influence[(spec_idx, term.poly)] = [
                term.op(Polynomial.monomial(n, mono)) for mono in coeff_basis
            ]

    block_sizes: list[int] = []
    grams: dict[str, GramInfo] = {}
    identities: list[IdentityInfo] = []
    block_triplets: list[tuple[list[int], list[int], list[float]]] = []
    free_rows: list[int] = []
    free_cols: list[int] = []
    free_vals: list[float] = []
    b_parts: list[np.ndarray] = []
    row_base = 0

    def new_gram(name: str, basis: list[Monomial]) -> int:
        index = len(block_sizes)
        block_sizes.append(len(basis))
        block_triplets.append(([], [], []))
        grams[name] = GramInfo(name, index, basis)
        return index

    mult_deg = 2 * (degree // 2)
    for spec_idx, spec in enumerate(specs):
        max_deg = spec.fixed.degree()
        for term in spec.free_terms:
            max_deg = max(max_deg, max(p.degree() for p in influence[(spec_idx, term.poly)]))
        for _, factor in spec.multipliers:
            max_deg = max(max_deg, mult_deg + factor.degree())
        gram_basis = monomial_basis(n, (max_deg + 1) // 2)
        matched = monomial_basis(n, 2 * ((max_deg + 1) // 2))
        row_of = {mono: row_base + r for r, mono in enumerate(matched)}
        m_rows = len(matched)

        gram_name = f"{spec.name}:gram"
        k_id = new_gram(gram_name, gram_basis)
        tri = block_triplets[k_id]
        for idx, mono, coeff in gram_pairs(gram_basis):
            tri[0].append(row_of[mono])
            tri[1].append(idx)
            tri[2].append(coeff)

        for mult_name, factor in spec.multipliers:
            k_m = new_gram(f"{spec.name}:{mult_name}", mult_basis)
            tri = block_triplets[k_m]
            acc: dict[tuple[int, int], float] = {}
            for idx, mono, coeff in gram_pairs(mult_basis):
                for fmono, fcoeff in factor.terms.items():
                    key = tuple(x + y for x, y in zip(mono, fmono))
                    acc_key = (row_of[key], idx)
                    acc[acc_key] = acc.get(acc_key, 0.0) - coeff * fcoeff
            for (r, cidx), val in acc.items():
                if val != 0.0:
                    tri[0].append(r)
                    tri[1].append(cidx)
                    tri[2].append(val)

        for term in spec.free_terms:
            polys = influence[(spec_idx, term.poly)]
            for col_local, poly in enumerate(polys):
                col = provisional_start[term.poly] + col_local
                acc: dict[int, float] = {}
                for mono, coeff in poly.terms.items():
                    r = row_of[mono]
                    acc[r] = acc.get(r, 0.0) - coeff
                for r, val in acc.items():
                    if val != 0.0:
                        free_rows.append(r)
                        free_cols.append(col)
                        free_vals.append(val)

        rhs = np.zeros(m_rows)
        for mono, coeff in spec.fixed.terms.items():
            rhs[row_of[mono] - row_base] = coeff
        b_parts.append(rhs)

        data_scale = max(
            1.0,
            spec.fixed.max_abs_coeff(),
            max((factor.max_abs_coeff() for _, factor in spec.multipliers), default=0.0),
            max((p.max_abs_coeff()
                 for term in spec.free_terms
                 for p in influence[(spec_idx, term.poly)]), default=0.0),
        )
        identities.append(IdentityInfo(spec.name, gram_name,
                                       [(f"{spec.name}:{mn}", factor)
                                        for mn, factor in spec.multipliers],
                                       spec.fixed, row_base, m_rows, data_scale))
        row_base += m_rows

    b = np.concatenate(b_parts)
    # normalize each identity's rows by the magnitude of its fixed data
    scale_vec = np.ones(row_base)
    if not row_scaling:
        for info in identities:
            info.scale = 1.0
    for info in identities:
        scale_vec[info.row_start:info.row_start + info.row_count] = 1.0 / info.scale
    for tri in block_triplets:
        rows, _, vals = tri
        for t in range(len(vals)):
            vals[t] *= scale_vec[rows[t]]
    for t in range(len(free_vals)):
        free_vals[t] *= scale_vec[free_rows[t]]
    b = b * scale_vec

    # compact the free segment: coefficients appearing in no row (a constant
    # entering only through its gradient) are pinned to zero, not solved for
    used_cols = sorted(set(free_cols))
    col_remap = {old: new for new, old in enumerate(used_cols)}
    free_cols = [col_remap[cidx] for cidx in free_cols]
    n_free = len(used_cols)
    free_polys: dict[str, FreePolyInfo] = {}
    for name in free_names:
        start = provisional_start[name]
        columns = [col_remap.get(start + i) for i in range(len(coeff_basis))]
        free_polys[name] = FreePolyInfo(name, coeff_basis, columns)

    c = None
    if objective == "volume":
        c = np.zeros(sum(svec_len(p) for p in block_sizes) + n_free)
        ncone = sum(svec_len(p) for p in block_sizes)
        scaled_box = [(lo / w, hi / w)
                      for (lo, hi), w in zip(instance.bounding_box, scales)]
        targets = ["v1", "v2"] if method.kind is MethodKind.COMBINED else ["v"]
        for name in targets:
            info = free_polys[name]
            for mono, col in zip(info.basis, info.columns):
                if col is not None:
                    c[ncone + col] = -_box_monomial_integral(mono, scaled_box)

    problem = SdpProblem.from_triplets(block_sizes, n_free, block_triplets,
                                       (free_rows, free_cols, free_vals), b, c)
    layout = ProgramLayout(method, degree, eps, n, free_polys, grams,
                           identities, n_free, block_sizes, scales)
    return problem, layout


def _box_monomial_integral(mono: Monomial, box) -> float:
    out = 1.0
    for (lo, hi), e in zip(box, mono):
        out *= (hi ** (e + 1) - lo ** (e + 1)) / (e + 1)
    return out


def reconstruct(layout: ProgramLayout, solution: np.ndarray,
                solver_stats: dict | None = None) -> Certificate:
    """Rebuild named polynomials and Gram blocks from a solution vector."""
    ncone = sum(svec_len(p) for p in layout.block_sizes)
    expected = ncone + layout.n_free
    solution = np.asarray(solution, dtype=float)
    if solution.shape != (expected,):
        raise ValueError(f"solution has length {solution.shape}, expected ({expected},)")

    offsets = []
    acc = 0
    for p in layout.block_sizes:
        offsets.append(acc)
        acc += svec_len(p)

    # solved objects live in box-normalized coordinates; map back with the
    # inverse substitution (polynomials) and the diagonal congruence (Grams)
    scales = layout.axis_scales
    polynomials: dict[str, Polynomial] = {}
    for name, info in layout.free_polys.items():
        terms = {}
        for mono, col in zip(info.basis, info.columns):
            if col is not None:
                terms[mono] = solution[ncone + col]
        scaled_poly = Polynomial(layout.dimension, terms)
        polynomials[name] = substitute_scaling(scaled_poly, scales, inverse=True)

    gram_blocks: dict[str, GramBlock] = {}
    for name, info in layout.grams.items():
        p = layout.block_sizes[info.block_index]
        seg = solution[offsets[info.block_index]:offsets[info.block_index] + svec_len(p)]
        q_scaled = smat(seg, p)
        d = np.array([math.prod((1.0 / w) ** e for w, e in zip(scales, mono))
                      for mono in info.basis])
        gram_blocks[name] = GramBlock(info.basis, d[:, None] * q_scaled * d[None, :])

    # expanded multiplier polynomials, named without the identity prefix
    for ident in layout.identities:
        for gname, _ in ident.multipliers:
            short = gname.split(":", 1)[1]
            polynomials[short] = gram_blocks[gname].expand(layout.dimension)

    return Certificate(layout.method, layout.degree, layout.eps, polynomials,
                       gram_blocks, solver_stats or {})
