"""Simulation laboratory for the stochastically forced, fractionally
dissipated 2D Euler equation in vorticity form, plus a verification harness
for the quantitative estimates behind its ergodicity theory."""

__version__ = "0.1.0"

from .spectral import (
    Grid2D,
    GridError,
    MultiplierSymbol,
    SpectralField,
    apply_multiplier,
    biot_savart,
    curl,
    dealias,
    derivative,
    inner_l2,
    lp_norm,
    sobolev_norm,
    to_physical,
    to_spectral,
)
from .forcing import (
    ForcingBasis,
    ForcingConfig,
    ForcingError,
    NoiseRealization,
    NoiseStream,
    build_basis,
    derive_stream_seed,
    ou_exact_step,
    sigma_hs_norm,
    sigma_lp_norm,
)
from .dynamics import (
    BlowUpError,
    CheckpointError,
    FrozenFlow,
    SimParams,
    TrajectoryState,
    bilinear_B,
    fresh_state,
    lambda_N,
    load_checkpoint,
    save_checkpoint,
    step_control,
    step_linearized,
    step_main,
    step_shifted,
)
from .observables import (
    BudgetError,
    DecayFit,
    EstimatorResult,
    KappaBudget,
    MomentSeries,
    ResolutionWarning,
    SmoothingSchedule,
    TimeAverageReport,
    alpha_at,
    bootstrap_exponent,
    bounded_functionals,
    exp_moment_estimator,
    exp_time_integral_estimator,
    fit_decay_rate,
    fit_log_slope,
    kappa_zero,
    record_smoothing_moments,
    time_average_diagnostic,
)
from .inequalities import (
    InequalityReport,
    check_commutator,
    check_fp_scalar,
    check_poincare,
    commutator_ratio_study,
    fp_grid_violations,
    p_gamma,
    poincare_constant,
    q_exponent,
)

__all__ = [
    "__version__",
    "Grid2D",
    "GridError",
    "MultiplierSymbol",
    "SpectralField",
    "apply_multiplier",
    "biot_savart",
    "curl",
    "dealias",
    "derivative",
    "inner_l2",
    "lp_norm",
    "sobolev_norm",
    "to_physical",
    "to_spectral",
    "ForcingBasis",
    "ForcingConfig",
    "ForcingError",
    "NoiseRealization",
    "NoiseStream",
    "build_basis",
    "derive_stream_seed",
    "ou_exact_step",
    "sigma_hs_norm",
    "sigma_lp_norm",
    "BlowUpError",
    "CheckpointError",
    "FrozenFlow",
    "SimParams",
    "TrajectoryState",
    "bilinear_B",
    "fresh_state",
    "lambda_N",
    "load_checkpoint",
    "save_checkpoint",
    "step_control",
    "step_linearized",
    "step_main",
    "step_shifted",
    "BudgetError",
    "DecayFit",
    "EstimatorResult",
    "KappaBudget",
    "MomentSeries",
    "ResolutionWarning",
    "SmoothingSchedule",
    "TimeAverageReport",
    "alpha_at",
    "bootstrap_exponent",
    "bounded_functionals",
    "exp_moment_estimator",
    "exp_time_integral_estimator",
    "fit_decay_rate",
    "fit_log_slope",
    "kappa_zero",
    "record_smoothing_moments",
    "time_average_diagnostic",
    "InequalityReport",
    "check_commutator",
    "check_fp_scalar",
    "check_poincare",
    "commutator_ratio_study",
    "fp_grid_violations",
    "p_gamma",
    "poincare_constant",
    "q_exponent",
]
