"""Benchmark suites: bundled problem fixtures with their method grids.

Each suite pairs a packaged problem instance with the method parameters the
comparison table sweeps: the decrease-rate grid where a rate was swept, and
the alpha templates used for the generalized method on that system.
"""

from __future__ import annotations

from .poly import parse_polynomial
from .problemio import load_bundled_problem
from .semialg import ProblemInstance
from .sosbuild import Method, MethodKind

_BETA_SWEEP = [1.0, 0.1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6]


def _general(expr: str, dimension: int) -> Method:
    return Method(MethodKind.GENERAL,
                  alpha_multiplier=parse_polynomial(expr, dimension))


def suite_methods(name: str, dimension: int) -> list[Method]:
    exp = [Method(MethodKind.EXP, beta=b) for b in _BETA_SWEEP]
    combined = [Method(MethodKind.COMBINED, beta=b) for b in _BETA_SWEEP]
    grids = {
        "illu1": [Method(MethodKind.EXP, beta=0.1), Method(MethodKind.EXP, beta=1.0),
                  Method(MethodKind.ASYM), Method(MethodKind.COMBINED, beta=2.0)],
        "illu4": ([Method(MethodKind.PRAJNA), Method(MethodKind.ASYM)]
                  + [Method(MethodKind.EXP, beta=b) for b in (0.1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)]
                  + [_general("x1^2", dimension)]),
        "vdp": ([Method(MethodKind.PRAJNA), Method(MethodKind.ASYM)]
                + exp + combined + [_general("x1^2", dimension)]),
        "tan1": ([Method(MethodKind.PRAJNA), Method(MethodKind.ASYM)]
                 + exp + combined + [_general("2 - x2", dimension)]),
        "tan2": ([Method(MethodKind.PRAJNA), Method(MethodKind.ASYM)]
                 + exp + combined
                 + [_general("(x1 + x2)^2", dimension), _general("x1^4", dimension)]),
        "dubins": ([Method(MethodKind.PRAJNA), Method(MethodKind.ASYM)]
                   + exp + combined + [_general("(1 - x1)^2", dimension)]),
    }
    if name not in grids:
        raise KeyError(f"unknown suite {name!r}; expected one of {sorted(grids)}")
    return grids[name]


SUITE_NAMES = ["illu1", "illu4", "vdp", "tan1", "tan2", "dubins"]


def load_suite(name: str) -> tuple[ProblemInstance, list[Method]]:
    if name not in SUITE_NAMES:
        raise KeyError(f"unknown suite {name!r}; expected one of {SUITE_NAMES}")
    instance = load_bundled_problem(name)
    return instance, suite_methods(name, instance.dimension)
