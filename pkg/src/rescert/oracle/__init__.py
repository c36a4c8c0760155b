"""Independent ground truth: trajectories, value integrals and exact linear solutions."""

from .checks import (CheckReport, CheckRow, check_decrease, check_sublevel_containment,
                     check_value_bounds, check_closed_loop, certified_value, oracle_tol)
from .integrate import Trajectory, integrate_batch
from .linear import lyap_solve, riccati_residual, riccati_solve
from .values import (OracleValue, closed_loop_tail_matrix, integrate, lyapunov_tail_matrix,
                     net_policy, policy_cost, policy_costs, true_value, true_values)

__all__ = [
    "CheckReport", "CheckRow", "OracleValue", "Trajectory", "certified_value",
    "check_decrease", "check_sublevel_containment", "check_value_bounds", "check_closed_loop",
    "closed_loop_tail_matrix", "integrate", "integrate_batch", "lyap_solve",
    "lyapunov_tail_matrix", "net_policy", "oracle_tol", "policy_cost", "policy_costs",
    "riccati_residual", "riccati_solve", "true_value", "true_values",
]
