"""Certified adaptive ML-ROM / RB-ROM / FOM hierarchy for parametrized LQ optimal control."""
from .dynamics import (
    IntegrationError,
    OCProblem,
    TimeGrid,
    apply_gramian,
    control_from_adjoint,
    evaluate_cost,
    flow_map,
    optimality_trajectories,
    propagate_adjoint,
    propagate_forward,
)
from .estimator import ErrorEstimate, estimate_error, operator_norm_estimate, residual_from_state
from .fom import FinalTimeAdjoint, FOMSolution, KrylovError, apply_system_operator, assemble_rhs, solve_fom
from .heat1d import HeatConfig, ScalarConfig, build_heat_problem, build_scalar_problem, parameter_grid
from .hierarchy import (
    AdaptiveModelHierarchy,
    HierarchyConfig,
    HierarchyState,
    QueryRecord,
    QueryResult,
    SummaryStats,
    retrain,
    summarize,
)
from .mlrom import CoefficientSurrogate, CoefficientTrainingSet, KernelConfig, gaussian_kernel, predict, solve_ml, train_vkoga
from .rbrom import RBSolution, ReducedBasis, SingularBasisError, extend_basis, read_basis, solve_rb, write_basis

__version__ = "0.1.0"
