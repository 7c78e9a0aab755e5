"""Finite-element lattice schemes for linear parabolic SPDEs on a torus.

The package builds shift-invariant finite elements from one symmetric mother
function, verifies the assumptions that make the lattice scheme well posed
and second-order consistent, integrates the resulting system of SDEs with a
drift-implicit Euler-Maruyama stepper under noise shared across nested mesh
levels, and accelerates the spatial convergence by Richardson extrapolation.
"""

__version__ = "0.1.0"

from .assembly import AssembledProblem, StencilOperator, assemble_drift, assemble_mass, assemble_noise, mollify_data
from .checks import AssumptionReport, check_cardinal, check_compatibility, check_invertibility, check_parabolicity, verify_element
from .elements import FiniteElement, build_element, evaluate_psi, load_element_file, parse_element_text, validate_element
from .expr import EvalError, ExprSyntaxError, evaluate, parse, to_source
from .integrator import (
    IntegrationError,
    NoisePath,
    SolverConfig,
    SolverError,
    Trajectory,
    integrate,
    integrate_multilevel,
    sample_seed,
    solve_linear,
    step_implicit_em,
)
from .lattice import GridFunction, TorusLattice, build_torus, inner_0h, norm_0h, restrict
from .problem import Problem, load_problem_file, parse_problem_text
from .richardson import (
    ConvergenceReport,
    ExtrapolationPlan,
    combine,
    error_norm,
    estimate_order,
    extrapolation_coefficients,
)
from .study import StudyConfig, StudyResult, run_convergence_study
from .tensors import ReferenceTensors, compute_reference_tensors

__all__ = [
    "AssembledProblem",
    "AssumptionReport",
    "ConvergenceReport",
    "EvalError",
    "ExprSyntaxError",
    "ExtrapolationPlan",
    "FiniteElement",
    "GridFunction",
    "IntegrationError",
    "NoisePath",
    "Problem",
    "ReferenceTensors",
    "SolverConfig",
    "SolverError",
    "StencilOperator",
    "StudyConfig",
    "StudyResult",
    "TorusLattice",
    "Trajectory",
    "assemble_drift",
    "assemble_mass",
    "assemble_noise",
    "build_element",
    "build_torus",
    "check_cardinal",
    "check_compatibility",
    "check_invertibility",
    "check_parabolicity",
    "combine",
    "compute_reference_tensors",
    "error_norm",
    "estimate_order",
    "evaluate",
    "evaluate_psi",
    "extrapolation_coefficients",
    "inner_0h",
    "integrate",
    "integrate_multilevel",
    "load_element_file",
    "load_problem_file",
    "mollify_data",
    "norm_0h",
    "parse",
    "parse_element_text",
    "parse_problem_text",
    "restrict",
    "run_convergence_study",
    "sample_seed",
    "solve_linear",
    "step_implicit_em",
    "to_source",
    "validate_element",
    "verify_element",
]
