"""Stochastic-bandit hyperparameter transfer toolkit."""

__version__ = "0.1.0"

from . import errors
from .analysis import (
    LowerBoundReport,
    RegretCurve,
    TransferResult,
    generalization_curve,
    kl_inf_gaussian,
    lower_bound_constant,
    regret_curve,
    transfer_experiment,
)
from .baselines import (
    CorralState,
    log_barrier_step,
    run_corral,
    run_corral_stochastic,
    tsallis_weights,
)
from .dual import (
    PiecewiseLoss,
    QdEstimate,
    alpha_critical_points,
    estimate_qd,
    linucb_critical_points,
    piecewise_dual_ucb,
)
from .env import (
    ArmDistribution,
    BanditInstance,
    Bernoulli,
    BernoulliFamily,
    Categorical,
    ContextualInstance,
    CustomFamily,
    GPInstance,
    Gaussian,
    GaussianFamily,
    RewardTape,
    TaskDistribution,
    Uniform,
    UniformFamily,
    draw_tape,
    inverse_cdf,
    load_tapes,
    sample_task,
    save_tapes,
)
from .policies import (
    GpState,
    LinUcbState,
    PriorSpec,
    RbfKernel,
    RunRecord,
    UcbState,
    collect_offline_piecewise,
    collect_offline_uniform,
    default_beta_schedule,
    gp_posterior,
    run_gpucb,
    run_linucb,
    run_ucb,
    run_ucb_with_prior,
    ucb_index,
)
from .tuner import (
    SampleBudget,
    TunerResult,
    grid_erm,
    sample_budget,
    tune_gp_noise,
    tune_with_prior,
    tuned_ucb,
)

__all__ = [
    "errors",
    "__version__",
    "ArmDistribution",
    "Bernoulli",
    "Uniform",
    "Gaussian",
    "Categorical",
    "BanditInstance",
    "TaskDistribution",
    "BernoulliFamily",
    "UniformFamily",
    "GaussianFamily",
    "CustomFamily",
    "RewardTape",
    "ContextualInstance",
    "GPInstance",
    "sample_task",
    "inverse_cdf",
    "draw_tape",
    "load_tapes",
    "save_tapes",
    "PiecewiseLoss",
    "QdEstimate",
    "alpha_critical_points",
    "piecewise_dual_ucb",
    "linucb_critical_points",
    "estimate_qd",
    "UcbState",
    "PriorSpec",
    "LinUcbState",
    "GpState",
    "RbfKernel",
    "RunRecord",
    "ucb_index",
    "run_ucb",
    "run_ucb_with_prior",
    "run_linucb",
    "gp_posterior",
    "default_beta_schedule",
    "run_gpucb",
    "collect_offline_uniform",
    "collect_offline_piecewise",
    "TunerResult",
    "SampleBudget",
    "tuned_ucb",
    "grid_erm",
    "tune_with_prior",
    "tune_gp_noise",
    "sample_budget",
    "CorralState",
    "log_barrier_step",
    "tsallis_weights",
    "run_corral",
    "run_corral_stochastic",
    "RegretCurve",
    "LowerBoundReport",
    "TransferResult",
    "kl_inf_gaussian",
    "lower_bound_constant",
    "regret_curve",
    "transfer_experiment",
    "generalization_curve",
]
