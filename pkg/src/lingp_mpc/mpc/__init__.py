"""LQR, condensed-QP construction, QP solving and the LinMPC-LinGP controller."""

from .condensed import (
    BoxConstraints,
    CondensedBuilder,
    CondensedQP,
    build_condensed,
    forces_from_lingp,
    predict_relative_stack,
    prediction_matrices,
)
from .controller import LinMPCController, cancelling_input, default_constraints, default_cost, mpc_step
from .qp import ADMMSolver, QPSolution, SolveStats, kkt_residuals, solve_qp, solve_qp_dense
from .riccati import CostSpec, RiccatiSolution, dare_terminal_cost, riccati_lqr

__all__ = [
    "ADMMSolver", "BoxConstraints", "CondensedBuilder", "CondensedQP", "CostSpec",
    "LinMPCController", "QPSolution", "RiccatiSolution", "SolveStats", "build_condensed",
    "cancelling_input", "dare_terminal_cost", "default_constraints", "default_cost",
    "forces_from_lingp", "kkt_residuals", "mpc_step", "predict_relative_stack",
    "prediction_matrices", "riccati_lqr", "solve_qp", "solve_qp_dense",
]
