"""Independent validation of solved certificates.

A certificate returned by the solver is never trusted as-is.  Three layers
of evidence are gathered:

* algebraic: every SOS identity is re-expanded with direct polynomial
  arithmetic from the reconstructed named polynomials and compared against
  its Gram form; the worst residual coefficient and the worst Gram
  eigenvalue are reported;
* sampling: every quantified inequality of the method is evaluated on dense
  samples of its region (initial set, safe set minus target, safe-set
  boundary); the worst signed slack per constraint is reported;
* geometry: the zero level set of the guidance polynomial can be exported
  as grid data with marching-squares segments in two dimensions.

Sampling is evidence, not proof: a passing report is labelled
falsification-free at its sample count, nothing stronger.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .poly import Polynomial, lie_derivative
from .semialg import ProblemInstance, sample, sample_boundary
from .sosbuild import Certificate, GramBlock, MethodKind

# Acceptance thresholds for a valid certificate; they track the accuracy a
# double-precision interior-point solve can deliver.
RESIDUAL_TOL = 1e-6
GRAM_EIG_FLOOR = -1e-7
MARGIN_FLOOR = -1e-6


@dataclass
class ConstraintMargin:
    constraint: str
    region: str
    worst: float
    samples: int

    def ok(self) -> bool:
        return self.worst >= MARGIN_FLOOR


@dataclass
class ValidationReport:
    """Combined validation evidence for one certificate."""

    identity_residuals: dict[str, float]
    max_residual: float
    gram_min_eigenvalues: dict[str, float]
    min_eigenvalue: float
    margins: list[ConstraintMargin]
    sample_count: int
    seed: int
    passed: bool
    evidence: str = ""

    def to_dict(self) -> dict:
        return {
            "identity_residuals": self.identity_residuals,
            "max_residual": self.max_residual,
            "gram_min_eigenvalues": self.gram_min_eigenvalues,
            "min_eigenvalue": self.min_eigenvalue,
            "margins": [
                {"constraint": m.constraint, "region": m.region,
                 "worst": m.worst, "samples": m.samples}
                for m in self.margins
            ],
            "sample_count": self.sample_count,
            "seed": self.seed,
            "passed": self.passed,
            "evidence": self.evidence,
        }


def identity_targets(cert: Certificate, instance: ProblemInstance):
    """Re-derive each identity target from the reconstructed polynomials.

    This follows the method definition directly (Lie derivatives, multiplier
    products) rather than the row-matching path used to build the SDP, so a
    compiler bug and a validation bug would have to coincide to go unseen.
    """
    n = instance.dimension
    f = instance.f
    h = instance.safe.h
    ls = instance.initial.constraints
    gs = instance.target.constraints
    P = cert.polynomials
    eps = cert.eps
    kind = cert.method.kind

    def s(name):
        return P[name]

    def init_sum():
        total = Polynomial.zero(n)
        for i in range(len(ls)):
            total = total + s(f"s0,{i + 1}") * ls[i]
        return total

    out = []
    if kind is MethodKind.PRAJNA:
        out.append(("initial", -P["v"] + init_sum(), "initial:gram"))
        for j in range(len(gs)):
            name = f"derivative[{j + 1}]"
            target = (-lie_derivative(P["v"], f) - eps
                      + s(f"s1,{j + 1}") * h - s(f"s2,{j + 1}") * gs[j])
            out.append((name, target, f"{name}:gram"))
        out.append(("boundary", P["v"] - eps - P["q"] * h, "boundary:gram"))
        return out

    if kind is MethodKind.EXP:
        out.append(("initial", P["v"] - eps + init_sum(), "initial:gram"))
        for j in range(len(gs)):
            name = f"derivative[{j + 1}]"
            target = (lie_derivative(P["v"], f) - cert.method.beta * P["v"]
                      + s(f"s1,{j + 1}") * h - s(f"s2,{j + 1}") * gs[j])
            out.append((name, target, f"{name}:gram"))
        out.append(("boundary", -P["v"] - P["p"] * h, "boundary:gram"))
        return out

    if kind in (MethodKind.ASYM, MethodKind.GENERAL):
        out.append(("initial", P["v"] - eps + init_sum(), "initial:gram"))
        for j in range(len(gs)):
            name = f"derivative[{j + 1}]"
            target = lie_derivative(P["v"], f)
            if kind is MethodKind.GENERAL:
                target = target - cert.method.alpha_multiplier * P["v"]
            target = target + s(f"s1,{j + 1}") * h - s(f"s2,{j + 1}") * gs[j]
            out.append((name, target, f"{name}:gram"))
        for j in range(len(gs)):
            name = f"coupling[{j + 1}]"
            target = (lie_derivative(P["w"], f) - P["v"]
                      + s(f"s3,{j + 1}") * h - s(f"s4,{j + 1}") * gs[j])
            out.append((name, target, f"{name}:gram"))
        out.append(("boundary", -P["v"] - P["p"] * h, "boundary:gram"))
        return out

    # combined
    p1 = P.get("p1", P.get("p"))
    p2 = P.get("p2", P.get("p"))
    out.append(("initial", P["v1"] + P["v2"] - eps + init_sum(), "initial:gram"))
    for j in range(len(gs)):
        name = f"derivative[{j + 1}]"
        out.append((name, lie_derivative(P["v1"], f)
                    + s(f"s1,{j + 1}") * h - s(f"s2,{j + 1}") * gs[j], f"{name}:gram"))
    for j in range(len(gs)):
        name = f"coupling[{j + 1}]"
        out.append((name, lie_derivative(P["w"], f) - P["v1"]
                    + s(f"s3,{j + 1}") * h - s(f"s4,{j + 1}") * gs[j], f"{name}:gram"))
    for j in range(len(gs)):
        name = f"exp_derivative[{j + 1}]"
        out.append((name, lie_derivative(P["v2"], f) - cert.method.beta * P["v2"]
                    + s(f"s5,{j + 1}") * h - s(f"s6,{j + 1}") * gs[j], f"{name}:gram"))
    out.append(("boundary_v1", -P["v1"] - p1 * h, "boundary_v1:gram"))
    out.append(("boundary_v2", -P["v2"] - p2 * h, "boundary_v2:gram"))
    return out


def validate_algebraic(cert: Certificate, instance: ProblemInstance):
    """Residual coefficients of every identity and Gram eigenvalue floors."""
    residuals: dict[str, float] = {}
    for name, target, gram_name in identity_targets(cert, instance):
        expanded = cert.gram_blocks[gram_name].expand(instance.dimension)
        residuals[name] = (target - expanded).max_abs_coeff()
    eigs = {name: block.min_eigenvalue() for name, block in cert.gram_blocks.items()}
    return residuals, eigs


def _constraint_values(cert: Certificate, instance: ProblemInstance):
    """(constraint name, region key, value polynomial) triples whose values
    must be nonnegative on samples of the region."""
    f = instance.f
    P = cert.polynomials
    eps = cert.eps
    kind = cert.method.kind
    half = 0.5 * eps
    if kind is MethodKind.PRAJNA:
        return [
            ("initial_nonpositive", "initial", -P["v"]),
            ("derivative_decrease", "safe_minus_target",
             -lie_derivative(P["v"], f) - half),
            ("boundary_positive", "boundary", P["v"] - half),
        ]
    if kind is MethodKind.EXP:
        return [
            ("initial_positive", "initial", P["v"] - half),
            ("derivative_rate", "safe_minus_target",
             lie_derivative(P["v"], f) - cert.method.beta * P["v"]),
            ("boundary_nonpositive", "boundary", -P["v"]),
        ]
    if kind is MethodKind.ASYM:
        return [
            ("initial_positive", "initial", P["v"] - half),
            ("derivative_monotone", "safe_minus_target", lie_derivative(P["v"], f)),
            ("coupling", "safe_minus_target",
             lie_derivative(P["w"], f) - P["v"]),
            ("boundary_nonpositive", "boundary", -P["v"]),
        ]
    if kind is MethodKind.GENERAL:
        return [
            ("initial_positive", "initial", P["v"] - half),
            ("derivative_alpha", "safe_minus_target",
             lie_derivative(P["v"], f) - cert.method.alpha_multiplier * P["v"]),
            ("coupling", "safe_minus_target",
             lie_derivative(P["w"], f) - P["v"]),
            ("boundary_nonpositive", "boundary", -P["v"]),
        ]
    return [
        ("initial_positive", "initial", P["v1"] + P["v2"] - half),
        ("derivative_monotone", "safe_minus_target", lie_derivative(P["v1"], f)),
        ("coupling", "safe_minus_target",
         lie_derivative(P["w"], f) - P["v1"]),
        ("exp_derivative_rate", "safe_minus_target",
         lie_derivative(P["v2"], f) - cert.method.beta * P["v2"]),
        ("boundary_v1_nonpositive", "boundary", -P["v1"]),
        ("boundary_v2_nonpositive", "boundary", -P["v2"]),
    ]


def sample_safe_minus_target(instance: ProblemInstance, count: int, seed: int,
                             max_batches: int = 400) -> np.ndarray:
    """Interior samples of the safe set with the target carved out."""
    rng = np.random.default_rng(seed)
    lows = np.array([lo for lo, _ in instance.bounding_box])
    highs = np.array([hi for _, hi in instance.bounding_box])
    chunks = []
    found = 0
    for _ in range(max_batches):
        pts = rng.uniform(lows, highs, size=(max(1024, count), len(lows)))
        h_vals = instance.safe.h.eval_many(pts)
        g_vals = instance.target.defining_values_many(pts)
        keep = (h_vals < 0) & (g_vals.max(axis=1) > 0)
        if keep.any():
            chunks.append(pts[keep])
            found += int(keep.sum())
        if found >= count:
            break
    if found < count:
        raise RuntimeError("could not sample the safe set outside the target")
    return np.concatenate(chunks)[:count]


def validate_sampling(cert: Certificate, instance: ProblemInstance,
                      sample_count: int = 10_000, seed: int = 0) -> list[ConstraintMargin]:
    """Worst signed slack of every quantified inequality over dense samples."""
    regions = {
        "initial": sample(instance.initial, sample_count, instance.bounding_box, seed)[0],
        "safe_minus_target": sample_safe_minus_target(instance, sample_count, seed + 1),
        "boundary": sample_boundary(instance.safe, max(512, sample_count // 10),
                                    instance.bounding_box, seed + 2),
    }
    margins = []
    for cname, region, value_poly in _constraint_values(cert, instance):
        pts = regions[region]
        values = value_poly.eval_many(pts)
        margins.append(ConstraintMargin(cname, region, float(values.min()), len(pts)))
    return margins


def validate(cert: Certificate, instance: ProblemInstance,
             sample_count: int = 10_000, seed: int = 0) -> ValidationReport:
    residuals, eigs = validate_algebraic(cert, instance)
    margins = validate_sampling(cert, instance, sample_count, seed)
    max_res = max(residuals.values())
    min_eig = min(eigs.values())
    passed = (max_res <= RESIDUAL_TOL and min_eig >= GRAM_EIG_FLOOR
              and all(m.ok() for m in margins))
    return ValidationReport(
        identity_residuals=residuals,
        max_residual=max_res,
        gram_min_eigenvalues=eigs,
        min_eigenvalue=min_eig,
        margins=margins,
        sample_count=sample_count,
        seed=seed,
        passed=passed,
        evidence=f"falsification-free at {sample_count} samples per constraint"
        if passed else "validation failed",
    )


def exp_embedding_margins(cert: Certificate, instance: ProblemInstance,
                          sample_count: int = 10_000, seed: int = 0) -> list[ConstraintMargin]:
    """Check an exponential certificate against the asymptotic inequality set
    with the auxiliary function taken as v / beta.

    The coupling inequality holds with equality under this substitution and
    the monotonicity inequality becomes redundant (it is implied wherever
    v >= 0 and is dropped in the exact equivalence), so the checked set is:
    positivity on the initial set, the coupling inequality off the target,
    and nonpositivity on the safe-set boundary.
    """
    if cert.method.kind is not MethodKind.EXP:
        raise ValueError("embedding check applies to exponential certificates only")
    v = cert.polynomials["v"]
    w = v * (1.0 / cert.method.beta)
    f = instance.f
    checks = [
        ("initial_positive", "initial", v - 0.5 * cert.eps),
        ("coupling", "safe_minus_target", lie_derivative(w, f) - v),
        ("boundary_nonpositive", "boundary", -v),
    ]
    regions = {
        "initial": sample(instance.initial, sample_count, instance.bounding_box, seed)[0],
        "safe_minus_target": sample_safe_minus_target(instance, sample_count, seed + 1),
        "boundary": sample_boundary(instance.safe, max(512, sample_count // 10),
                                    instance.bounding_box, seed + 2),
    }
    out = []
    for cname, region, value_poly in checks:
        pts = regions[region]
        values = value_poly.eval_many(pts)
        out.append(ConstraintMargin(cname, region, float(values.min()), len(pts)))
    return out


# ---------------------------------------------------------------------------
# level sets
# ---------------------------------------------------------------------------

@dataclass
class LevelSet:
    """Grid evaluation of the guidance polynomial and its zero crossings.

    ``vertices``/``segments`` describe the marching-squares contour in two
    dimensions; in three dimensions only the raw grid is produced.
    """

    axes: list[np.ndarray]
    values: np.ndarray
    vertices: list[tuple[float, float]] = field(default_factory=list)
    segments: list[tuple[int, int]] = field(default_factory=list)


def extract_level_set(v: Polynomial, bounding_box, resolution: int = 101) -> LevelSet:
    n = v.dimension
    if n not in (2, 3):
        raise ValueError("level-set export unsupported for dimension > 3")
    axes = [np.linspace(lo, hi, resolution) for lo, hi in bounding_box]
    if n == 3:
        xx, yy, zz = np.meshgrid(*axes, indexing="ij")
        pts = np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])
        values = v.eval_many(pts).reshape(resolution, resolution, resolution)
        return LevelSet(axes, values)
    xx, yy = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    values = v.eval_many(pts).reshape(resolution, resolution)
    vertices, segments = _marching_squares(axes[0], axes[1], values)
    return LevelSet(axes, values, vertices, segments)


def _marching_squares(xs: np.ndarray, ys: np.ndarray, values: np.ndarray):
    """Zero-contour segments of a grid by the 16-case cell lookup."""
    vertices: list[tuple[float, float]] = []
    vertex_of: dict[tuple, int] = {}
    segments: list[tuple[int, int]] = []

    def edge_vertex(kind, i, j):
        key = (kind, i, j)
        if key in vertex_of:
            return vertex_of[key]
        if kind == "x":  # between (i, j) and (i+1, j)
            v0, v1 = values[i, j], values[i + 1, j]
            t = v0 / (v0 - v1)
            point = (xs[i] + t * (xs[i + 1] - xs[i]), ys[j])
        else:  # between (i, j) and (i, j+1)
            v0, v1 = values[i, j], values[i, j + 1]
            t = v0 / (v0 - v1)
            point = (xs[i], ys[j] + t * (ys[j + 1] - ys[j]))
        vertex_of[key] = len(vertices)
        vertices.append(point)
        return vertex_of[key]

    # per-case list of edge pairs; edges: b(ottom), r(ight), t(op), l(eft)
    table = {
        1: [("l", "b")], 2: [("b", "r")], 3: [("l", "r")], 4: [("t", "r")],
        6: [("b", "t")], 7: [("l", "t")], 8: [("t", "l")], 9: [("b", "l")],
        11: [("t", "r")], 12: [("l", "r")], 13: [("b", "r")], 14: [("l", "b")],
    }
    for i in range(len(xs) - 1):
        for j in range(len(ys) - 1):
            bl = values[i, j] > 0
            br = values[i + 1, j] > 0
            tr = values[i + 1, j + 1] > 0
            tl = values[i, j + 1] > 0
            case = bl | (br << 1) | (tr << 2) | (tl << 3)
            if case in (0, 15):
                continue
            if case in (5, 10):
                center = 0.25 * (values[i, j] + values[i + 1, j]
                                 + values[i + 1, j + 1] + values[i, j + 1])
                if case == 5:
                    pairs = [("l", "t"), ("b", "r")] if center > 0 else \
                        [("l", "b"), ("t", "r")]
                else:
                    pairs = [("l", "b"), ("t", "r")] if center > 0 else \
                        [("l", "t"), ("b", "r")]
            else:
                pairs = table[case]
            edge_key = {
                "b": ("x", i, j), "t": ("x", i, j + 1),
                "l": ("y", i, j), "r": ("y", i + 1, j),
            }
            for e0, e1 in pairs:
                k0, a0, b0 = edge_key[e0]
                k1, a1, b1 = edge_key[e1]
                segments.append((edge_vertex(k0, a0, b0), edge_vertex(k1, a1, b1)))
    return vertices, segments


def write_level_set_csv(level: LevelSet, grid_path: str, segments_path: str | None = None) -> None:
    """Grid CSV (x, y[, z], v) plus, in 2-D, contour vertices and segments."""
    n = len(level.axes)
    with open(grid_path, "w") as fh:
        header = ["x", "y", "z"][:n] + ["v"]
        fh.write(",".join(header) + "\n")
        if n == 2:
            for i, x in enumerate(level.axes[0]):
                for j, y in enumerate(level.axes[1]):
                    fh.write(f"{float(x)!r},{float(y)!r},{float(level.values[i, j])!r}\n")
        else:
            for i, x in enumerate(level.axes[0]):
                for j, y in enumerate(level.axes[1]):
                    for k, z in enumerate(level.axes[2]):
                        fh.write(f"{float(x)!r},{float(y)!r},{float(z)!r},"
                                 f"{float(level.values[i, j, k])!r}\n")
    if segments_path is not None and n == 2:
        with open(segments_path, "w") as fh:
            fh.write("kind,a,b\n")
            for i, (x, y) in enumerate(level.vertices):
                fh.write(f"vertex,{float(x)!r},{float(y)!r}\n")
            for a, b in level.segments:
                fh.write(f"segment,{a},{b}\n")
