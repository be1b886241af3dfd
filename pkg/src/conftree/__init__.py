"""Near-best adaptive tree approximation on conforming meshes."""

from .error import (H1Error, TargetFunction, get_target, local_error_h1,
                    register_target, target_affine, target_u1, target_u2, target_xsq)
from .indicators import (Algorithm1, Algorithm2, ExactSum, RunTrace, StoppingRule,
                         TraceRecord, global_error, run, run_algorithm1, run_algorithm2)
from .interval import IntervalBackend, IntervalXsqError
from .nvb import InitialMesh, NVBBackend, build_domain_mesh, compatible_initial_labeling
from .oracle import certify_near_best, minimal_completion, sigma, sigma_table
from .quadrature import conical_rule, validate_rule
from .tree import Arena, GeometryBackend, PatchError, RefinementTree

__all__ = [
    "Algorithm1", "Algorithm2", "Arena", "ExactSum", "GeometryBackend", "H1Error",
    "InitialMesh", "IntervalBackend", "IntervalXsqError", "NVBBackend", "PatchError",
    "RefinementTree", "RunTrace", "StoppingRule", "TargetFunction", "TraceRecord",
    "build_domain_mesh", "certify_near_best", "compatible_initial_labeling", "conical_rule",
    "get_target", "global_error", "local_error_h1", "minimal_completion", "register_target",
    "run", "run_algorithm1", "run_algorithm2", "sigma", "sigma_table", "target_affine",
    "target_u1", "target_u2", "target_xsq", "validate_rule",
]
