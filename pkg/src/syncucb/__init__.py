"""Two-stage LinUCB simulator with posterior synchronization."""

__version__ = "0.1.0"

from .belief import (
    BetaSchedule,
    GaussianBelief,
    PreconditionError,
    SyncTarget,
    init_prior,
    kl_divergence,
    pretrained_prior,
)
from .env import LinearEnv, NoiseTable, build_toy_env
from .policy import (
    InvariantViolation,
    LinUCBAgent,
    RoundOutcome,
    SingleStageSystem,
    TwoStageSystem,
    select_action,
    sync_condition,
)
from .sim import (
    Aggregate,
    ExperimentConfig,
    RunRecord,
    aggregate,
    run_episode,
    run_experiment,
    write_results,
)
