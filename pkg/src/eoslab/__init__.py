"""Edge-of-stability dynamics lab.

Simulation and analysis tools for quadratic regression models trained by
gradient descent or gradient flow: exact residual/feature-map closures,
curvature (NTK) tracking, eigenbasis reductions, a two-variable reduced map
with its nullcline machinery, and batch sweep drivers.
"""
__version__ = "0.1.0"

from .tensor_core import (
    RngSpec,
    sym_eigen,
    check_q_tensor,
    contract_full,
    contract_partial,
    gaussian_tensor,
    mp_lambda_max_mean,
)
from .mode_space import (
    ModeState,
    Trajectory,
    SingularModelError,
    DivergenceError,
    t_moment,
    conserved_e,
    gf_rhs,
    integrate_gf,
    gd_step,
    t_recursion_check,
)
from .two_param import (
    ReducedModel,
    ReducedState,
    YState,
    YTrajectory,
    ConvergenceReport,
    InadmissibleStateError,
    SingularNullclineError,
    SingularSeriesError,
    RootNotFoundError,
    mode_projections,
    is_admissible,
    one_step,
    two_step,
    nullcline_z_one_step,
    nullcline_t_one_step,
    nullcline_series,
    nullcline_two_step,
    to_y,
    from_y,
    low_order_step,
    y_star,
    ode_integrate,
    run_to_convergence,
    trajectory,
)
from .quad_model import (
    QuadModel,
    ZJState,
    InitSpec,
    QuadTrajectory,
    SharpeningStats,
    CellRecord,
    forward,
    jacobian,
    gd_step_theta,
    gd_step_zj,
    gf_integrate_zj,
    ntk_lambda_max,
    init_random,
    r_nl_closed,
    r_nl_empirical,
    lambda_ddot_closed_form,
    sharpening_stats,
    task_rng,
    phase_sweep,
)
from .reductions import (
    LinearNetSpec,
    SpectrumPrediction,
    pack_theta,
    build_quad_model,
    predicted_spectrum,
    verify_spectrum,
    catapult_invariant,
    raw_gd_step,
)

__all__ = [
    "__version__",
    "RngSpec", "sym_eigen", "check_q_tensor", "contract_full", "contract_partial",
    "gaussian_tensor", "mp_lambda_max_mean",
    "ModeState", "Trajectory", "SingularModelError", "DivergenceError",
    "t_moment", "conserved_e", "gf_rhs", "integrate_gf", "gd_step", "t_recursion_check",
    "ReducedModel", "ReducedState", "YState", "YTrajectory", "ConvergenceReport",
    "InadmissibleStateError", "SingularNullclineError", "SingularSeriesError",
    "RootNotFoundError", "mode_projections", "is_admissible", "one_step", "two_step",
    "nullcline_z_one_step", "nullcline_t_one_step", "nullcline_series",
    "nullcline_two_step", "to_y", "from_y", "low_order_step", "y_star",
    "ode_integrate", "run_to_convergence", "trajectory",
    "QuadModel", "ZJState", "InitSpec", "QuadTrajectory", "SharpeningStats",
    "CellRecord", "forward", "jacobian", "gd_step_theta", "gd_step_zj",
    "gf_integrate_zj", "ntk_lambda_max", "init_random", "r_nl_closed",
    "r_nl_empirical", "lambda_ddot_closed_form", "sharpening_stats", "task_rng",
    "phase_sweep",
    "LinearNetSpec", "SpectrumPrediction", "pack_theta", "build_quad_model",
    "predicted_spectrum", "verify_spectrum", "catapult_invariant", "raw_gd_step",
]
