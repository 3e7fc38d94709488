"""Envy-free multi-attribute tariff pricing with a regularized customer
response: exact solvers, cell-based local search, and baselines."""

from .analysis import (ComparisonReport, SweepTable, beta_sweep,
                       check_metric_estimates, eta_bound, gamma_bound,
                       lipschitz_bound, profit_sweep)
from .bnb import (BigM, SolveReport, SolverOptions, bigm_det, bigm_piece_value,
                  bigm_quad, solve_det, solve_quad)
from .cli import GeneratorConfig, canonical_report, generate
from .model import (Instance, InstanceError, LinearConstraint, Pattern,
                    PricePolytope, ResponseMatrix, bill, disutility,
                    load_instance, profit, validate)
from .price_complex import (CellInfeasibleError, CellQP, CellSystem,
                            NeighborMove, OracleResult, asymptotic_cell_system,
                            cell_qp, cell_system, count_patterns, det_oracle,
                            enumerate_patterns, is_feasible, neighbors,
                            pattern_of, pure_assignment_lp, pure_patterns,
                            quad_oracle, solve_cell)
from .qspc import (QspcOptions, QspcState, explore_good_neighbors, miqp_restart,
                   qspc)
from .response import (Beta, QuadResponseDetail, det_profit, det_response_set,
                       logit_profit, logit_response, logit_row,
                       penalization_equivalence_check, qpcc_objective,
                       quad_profit, quad_response, quad_response_row)
from .subqp import QpProblem, QpSolution, find_feasible_point, project_simplex, solve_qp

__version__ = "0.1.0"

__all__ = [
    "Beta",
    "BigM",
    "CellInfeasibleError",
    "CellQP",
    "CellSystem",
    "ComparisonReport",
    "GeneratorConfig",
    "Instance",
    "InstanceError",
    "LinearConstraint",
    "NeighborMove",
    "OracleResult",
    "Pattern",
    "PricePolytope",
    "QpProblem",
    "QpSolution",
    "QspcOptions",
    "QspcState",
    "QuadResponseDetail",
    "ResponseMatrix",
    "SolveReport",
    "SolverOptions",
    "SweepTable",
    "asymptotic_cell_system",
    "beta_sweep",
    "bigm_det",
    "bigm_piece_value",
    "bigm_quad",
    "bill",
    "canonical_report",
    "cell_qp",
    "cell_system",
    "check_metric_estimates",
    "count_patterns",
    "det_oracle",
    "det_profit",
    "det_response_set",
    "disutility",
    "enumerate_patterns",
    "eta_bound",
    "explore_good_neighbors",
    "find_feasible_point",
    "gamma_bound",
    "generate",
    "is_feasible",
    "lipschitz_bound",
    "load_instance",
    "logit_profit",
    "logit_response",
    "logit_row",
    "miqp_restart",
    "neighbors",
    "pattern_of",
    "penalization_equivalence_check",
    "profit",
    "profit_sweep",
    "project_simplex",
    "pure_assignment_lp",
    "pure_patterns",
    "qpcc_objective",
    "qspc",
    "quad_oracle",
    "quad_profit",
    "quad_response",
    "quad_response_row",
    "solve_cell",
    "solve_det",
    "solve_qp",
    "solve_quad",
    "validate",
]
