"""Optimal temperature control of Kobayashi-Warren-Carter grain-boundary models.

Forward solver for the coupled order-parameter / orientation system, a
backward adjoint kernel built as the exact transpose of the forward
linearization, tracking-cost gradients, projected-gradient optimization
under pointwise box constraints, and scripted convergence studies.
"""

from .backends import BACKEND
from .control import (BoxConstraint, OptimizationReport, OptimizeOptions, TargetProfile,
                      adjoint_for, cost, gradient, optimality_residual, optimize, project,
                      time_inner_h, time_norm_h)
from .errors import (ConfigError, ConstraintError, GridMismatchError, KwcError,
                     LineSearchError, ModelValidationError, SolverError)
from .experiments import (ContinuationSpec, ConvergenceTable, max_face_slope,
                          run_constraint_continuation, run_eps_continuation,
                          run_limit_diagnostics)
from .grid import (BC, FaceVecField, Field, Grid2D, div_neg_adjoint, grad, inner_faces,
                   inner_h, laplacian, norm_h)
from .model import (MaterialFunctions, ModelParams, Regularizer, f_eps, grad_f_eps,
                    hess_f_eps, preset, sgn_membership)
from .sensitivity import (AdjointTrajectory, KernelCoefficients, SensitivityTrajectory,
                          Sextuplet, adjoint_step_matrix, coefficients_from_state,
                          forward_step_matrix, solve_adjoint, solve_linearized)
from .state import (ControlPair, StateTrajectory, free_energy, max_principle_bound,
                    solve_state, step_state, trajectory_distance)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "BC", "BoxConstraint", "ConfigError", "ConstraintError", "ContinuationSpec",
    "ControlPair", "ConvergenceTable", "FaceVecField", "Field", "Grid2D",
    "GridMismatchError", "KernelCoefficients", "KwcError", "LineSearchError",
    "MaterialFunctions", "ModelParams", "ModelValidationError", "OptimizationReport",
    "OptimizeOptions", "Regularizer", "AdjointTrajectory", "SensitivityTrajectory",
    "Sextuplet", "SolverError", "StateTrajectory", "TargetProfile",
    "adjoint_for", "adjoint_step_matrix", "coefficients_from_state", "cost",
    "div_neg_adjoint", "f_eps", "forward_step_matrix", "free_energy", "grad",
    "grad_f_eps", "gradient", "hess_f_eps", "inner_faces", "inner_h", "laplacian",
    "max_face_slope", "max_principle_bound", "norm_h", "optimality_residual", "optimize",
    "preset", "project", "run_constraint_continuation", "run_eps_continuation",
    "run_limit_diagnostics", "sgn_membership", "solve_adjoint", "solve_linearized",
    "solve_state", "step_state", "time_inner_h", "time_norm_h", "trajectory_distance",
]
