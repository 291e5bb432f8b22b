"""Basic semialgebraic set descriptions and point sampling.

Sets are conjunctions of strict polynomial inequalities: a point is inside
when every defining polynomial is negative.  The safe set uses a single
defining polynomial so that its boundary is exactly the zero level set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .poly import Polynomial, PolyVector

# Numerical band around a zero level set; bisection refines boundary points
# until the defining polynomial is within this tolerance of zero.
BOUNDARY_TOL = 1e-9
BISECTION_DEPTH = 60

# Rejection sampling gives up once the observed acceptance rate drops below
# this threshold with a substantial work budget already spent.
MIN_ACCEPT_RATE = 1e-4


class Membership(Enum):
    INSIDE = "inside"
    BOUNDARY = "boundary"
    OUTSIDE = "outside"


class SamplingError(RuntimeError):
    pass


@dataclass(frozen=True)
class BasicOpenSet:
    """Conjunction {x | p(x) < 0 for every p in constraints}."""

    constraints: tuple[Polynomial, ...]

    def __init__(self, constraints):
        constraints = tuple(constraints)
        if not constraints:
            raise ValueError("a basic open set needs at least one constraint")
        dim = constraints[0].dimension
        if any(p.dimension != dim for p in constraints):
            raise ValueError("all constraint polynomials must share one dimension")
        object.__setattr__(self, "constraints", constraints)

    @property
    def dimension(self) -> int:
        return self.constraints[0].dimension

    def defining_values(self, point) -> np.ndarray:
        return np.array([p.eval(point) for p in self.constraints])

    def defining_values_many(self, points: np.ndarray) -> np.ndarray:
        """(N, k) matrix of constraint values at each point."""
        return np.column_stack([p.eval_many(points) for p in self.constraints])


@dataclass(frozen=True)
class SafeSet:
    """Bounded safe region {h < 0} with boundary {h = 0}."""

    h: Polynomial

    @property
    def dimension(self) -> int:
        return self.h.dimension

    def defining_values(self, point) -> np.ndarray:
        return np.array([self.h.eval(point)])

    def defining_values_many(self, points: np.ndarray) -> np.ndarray:
        return self.h.eval_many(points)[:, None]

    def as_open_set(self) -> BasicOpenSet:
        return BasicOpenSet([self.h])


@dataclass(frozen=True)
class ProblemInstance:
    """Dynamics plus the safe, initial and target sets of one problem.

    Containment of the initial and target sets in the safe set is the
    caller's obligation; it is probed, not enforced.
    """

    dimension: int
    f: PolyVector
    safe: SafeSet
    initial: BasicOpenSet
    target: BasicOpenSet
    bounding_box: tuple[tuple[float, float], ...]
    name: str = ""

    def __post_init__(self):
        n = self.dimension
        if len(self.f) != n:
            raise ValueError(f"dynamics has {len(self.f)} entries, expected {n}")
        for label, obj in (("dynamics", self.f), ("safe", self.safe),
                           ("initial", self.initial), ("target", self.target)):
            if obj.dimension != n:
                raise ValueError(f"{label} has dimension {obj.dimension}, expected {n}")
        box = tuple((float(lo), float(hi)) for lo, hi in self.bounding_box)
        if len(box) != n:
            raise ValueError(f"bounding box has {len(box)} intervals, expected {n}")
        for lo, hi in box:
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ValueError(f"degenerate bounding box interval [{lo}, {hi}]")
        object.__setattr__(self, "bounding_box", box)


def membership(region: BasicOpenSet | SafeSet, point, tol: float = BOUNDARY_TOL) -> Membership:
    """Three-way classification of a point against a set.

    Inside requires every defining polynomial below -tol; a worst value in
    [-tol, tol] is boundary; anything larger is outside.
    """
    values = region.defining_values(point)
    worst = float(values.max())
    if worst < -tol:
        return Membership.INSIDE
    if worst <= tol:
        return Membership.BOUNDARY
    return Membership.OUTSIDE


def _box_points(rng: np.random.Generator, box, count: int) -> np.ndarray:
    lows = np.array([lo for lo, _ in box])
    highs = np.array([hi for _, hi in box])
    return rng.uniform(lows, highs, size=(count, len(box)))


def sample(
    region: BasicOpenSet | SafeSet,
    count: int,
    bounding_box,
    rng_seed: int,
    max_batches: int = 2000,
) -> tuple[np.ndarray, float]:
    """Rejection-sample strict-interior points of a set within a box.

    The batch size adapts to the observed acceptance rate so thin sets still
    fill the request.  Returns (points, acceptance_rate); raises
    SamplingError when the rate stays below MIN_ACCEPT_RATE after the work
    budget.
    """
    if count <= 0:
        return np.zeros((0, region.dimension)), 0.0
    rng = np.random.default_rng(rng_seed)
    batch = max(1024, 2 * count)
    accepted: list[np.ndarray] = []
    n_drawn = 0
    n_kept = 0
    for _ in range(max_batches):
        pts = _box_points(rng, bounding_box, batch)
        vals = region.defining_values_many(pts)
        keep = (vals < -BOUNDARY_TOL).all(axis=1)
        n_drawn += len(pts)
        n_kept += int(keep.sum())
        if keep.any():
            accepted.append(pts[keep])
        if n_kept >= count:
            break
        if n_drawn >= 50_000 and n_kept / n_drawn < MIN_ACCEPT_RATE:
            raise SamplingError(
                f"set appears empty or box too loose: {n_kept}/{n_drawn} accepted"
            )
        rate = n_kept / n_drawn
        if rate > 0:
            batch = min(500_000, max(batch, int(1.5 * (count - n_kept) / rate)))
    if n_kept < count:
        raise SamplingError(
            f"set appears empty or box too loose: only {n_kept}/{count} points found"
        )
    points = np.concatenate(accepted)[:count]
    return points, n_kept / n_drawn


def sample_boundary(
    safe: SafeSet,
    count: int,
    bounding_box,
    rng_seed: int,
    max_batches: int = 200,
) -> np.ndarray:
    """Points on {h = 0} found by bisecting inside/outside pairs.

    Box samples are split by the sign of h; each inside point is paired with
    an outside point and the sign change along the joining segment is
    bisected down to |h| <= BOUNDARY_TOL.
    """
    if count <= 0:
        return np.zeros((0, safe.dimension))
    rng = np.random.default_rng(rng_seed)
    h = safe.h
    out: list[np.ndarray] = []
    found = 0
    for _ in range(max_batches):
        pts = _box_points(rng, bounding_box, max(512, 2 * count))
        vals = h.eval_many(pts)
        inside = pts[vals < 0]
        outside = pts[vals > 0]
        n_pairs = min(len(inside), len(outside), count - found)
        for a, b in zip(inside[:n_pairs], outside[:n_pairs]):
            lo, hi = a, b  # h(lo) < 0 <= h(hi)
            mid = 0.5 * (lo + hi)
            for _ in range(BISECTION_DEPTH):
                mid = 0.5 * (lo + hi)
                v = h.eval(mid)
                if abs(v) <= BOUNDARY_TOL:
                    break
                if v < 0:
                    lo = mid
                else:
                    hi = mid
            if abs(h.eval(mid)) <= BOUNDARY_TOL:
                out.append(mid)
                found += 1
        if found >= count:
            break
    if found < count:
        raise SamplingError(
            f"boundary not located in box: {found}/{count} points found"
        )
    return np.array(out[:count])
