"""Two-mirror beam shaping via discrete optimal transport.

Design a pair of mirrors that reflects a collimated beam with intensity ``I``
into a collimated beam with intensity ``L``.  The heights come from the
Kantorovich potentials of the quadratic transport problem; the mirrors are
envelopes of paraboloids with focal parameter ``beta``.

>>> import twomirror as tm
>>> spec = tm.io.parse_problem(tm.demos.demo_problem("identity", n=4)).spec
>>> pair, res = tm.solve_reflectors(spec, "A")
>>> round(res.objective, 12)
0.0
"""

from . import core, demos, io, ot, reflector, verify
from .core import (
    BalanceViolationError,
    Direction,
    DiscreteMeasure,
    InternalSolverError,
    InvalidArgumentError,
    Kind,
    ProblemSpec,
    ProblemTooLargeError,
    ReflectorPair,
    TransportPlan,
    TwoMirrorError,
    UnsolvableProblemError,
    paraboloid_h,
    paraboloid_k,
    quadratic_cost,
    validate_problem,
)
from .io import ProblemFileError, export_meshes, load_problem, read_report, write_report
from .ot import (
    DualPotentials,
    SolveResult,
    c_transform_pair,
    duals_to_reflectors,
    functional_F,
    solve_entropic,
    solve_exact,
    solve_reflectors,
)
from .reflector import (
    GridSpec,
    apply_scaling_symmetry,
    eval_first,
    eval_second,
    inverse_ray_trace,
    potential_V,
    ray_trace,
    trace_map,
)
from .verify import (
    MongeAmpereLevel,
    VerificationReport,
    certify_optimality,
    check_monge_ampere,
    check_opl,
    check_pushforward,
    check_reflection_law,
    verify_pair,
)

__version__ = "0.1.0"

__all__ = [
    "core", "demos", "io", "ot", "reflector", "verify",
    "BalanceViolationError", "Direction", "DiscreteMeasure", "InternalSolverError",
    "InvalidArgumentError", "Kind", "ProblemSpec", "ProblemTooLargeError", "ReflectorPair",
    "TransportPlan", "TwoMirrorError", "UnsolvableProblemError", "paraboloid_h",
    "paraboloid_k", "quadratic_cost", "validate_problem",
    "ProblemFileError", "export_meshes", "load_problem", "read_report", "write_report",
    "DualPotentials", "SolveResult", "c_transform_pair", "duals_to_reflectors",
    "functional_F", "solve_entropic", "solve_exact", "solve_reflectors",
    "GridSpec", "apply_scaling_symmetry", "eval_first", "eval_second", "inverse_ray_trace",
    "potential_V", "ray_trace", "trace_map",
    "MongeAmpereLevel", "VerificationReport", "certify_optimality", "check_monge_ampere",
    "check_opl", "check_pushforward", "check_reflection_law", "verify_pair",
]
