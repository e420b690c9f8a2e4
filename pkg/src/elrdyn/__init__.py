"""Weight-norm and effective-learning-rate dynamics of normalized networks."""

from .core import (
    ConfigurationError,
    ContractViolation,
    LayerState,
    ModelConfig,
    NetworkState,
    SimulationOverflow,
    continuous_elr_ratio,
    continuous_sigma_sq,
    critical_lr,
    discrete_step,
    elr,
    elr_ratio,
    evolve_sigma_sq,
    flipping_ratio,
    step_network,
    subcritical_lr,
)
from .metrics import SpreadReport, flip_count, s_rel, spread_report
from .profiles import (
    DEFAULT_ALPHA,
    ProfileSpec,
    build_profile,
    explicit_profile,
    feedforward_profile,
    resnet_profile,
    uniform_profile,
)
from .schedulers import (
    Composite,
    Constant,
    Cosine,
    LinearWarmup,
    MultiStep,
    OneCycle,
    Schedule,
    SubcriticalWarmup,
    Trajectory,
    convergence_horizon,
    lr_at,
    schedule_from_dict,
    scheduler_scenarios,
    simulate,
)
from .stochastic import ConstrainPolicy, McConfig, deviation_report, mc_ensemble

__version__ = "0.1.0"
