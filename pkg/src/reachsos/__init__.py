"""Reach-avoid verification of polynomial ODE systems via SOS programming.

The pipeline: describe a system and its safe/initial/target sets
(``semialg``, ``problemio``), compile a verification method at a certificate
degree into a semidefinite program (``sosbuild``), solve it (``sdp``),
validate the returned certificate independently (``certify``), cross-check
with trajectory simulation (``sim``), and sweep degrees until one verifies
(``driver``).  ``cli`` wraps it all for the command line.
"""

from .poly import Polynomial, PolyVector, lie_derivative, monomial_basis, parse_polynomial
from .semialg import BasicOpenSet, Membership, ProblemInstance, SafeSet, membership
from .sosbuild import Certificate, DegreePlan, Method, MethodKind, build_program, reconstruct
from .sdp import SdpProblem, SolveStatus, SolverConfig, solve
from .certify import ValidationReport, extract_level_set, validate
from .sim import SimConfig, Trajectory, TrajectoryClass, integrate, monte_carlo_reach_avoid
from .driver import VerificationReport, compare_methods, run_sweep
from .problemio import load_bundled_problem, load_problem, save_problem

__version__ = "0.1.0"

__all__ = [
    "Polynomial", "PolyVector", "lie_derivative", "monomial_basis", "parse_polynomial",
    "BasicOpenSet", "SafeSet", "ProblemInstance", "Membership", "membership",
    "Method", "MethodKind", "DegreePlan", "Certificate", "build_program", "reconstruct",
    "SdpProblem", "SolverConfig", "SolveStatus", "solve",
    "ValidationReport", "validate", "extract_level_set",
    "SimConfig", "Trajectory", "TrajectoryClass", "integrate", "monte_carlo_reach_avoid",
    "VerificationReport", "run_sweep", "compare_methods",
    "load_problem", "save_problem", "load_bundled_problem",
]
