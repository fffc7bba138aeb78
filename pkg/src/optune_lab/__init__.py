"""Online preference tuning on exactly computable tabular policies.

Reward-ranked prompt regeneration, DPO / weighted-DPO losses, Bradley-Terry
reward fitting, an oracle pairwise judge, and an analytic cost model.
"""

__version__ = "0.1.0"

from .config import ExperimentConfig, dump_config, parse_config
from .efficiency import CostModel, generation_savings, iteration_cost, speedup
from .errors import DomainError, LogFormatError, NumericError, StateCorruptionError
from .evaluation import (
    AttributionReport,
    JudgeOutcome,
    judge_pairwise,
    reward_gain_attribution,
    rl_objective,
    win_score,
)
from .losses import (
    LossConfig,
    apply_step,
    dpo_loss,
    implicit_reward_margin,
    loss_gradient,
    wdpo_loss,
    wdpo_weight,
)
from .loop import IterationRecord, run_experiment, run_iteration, run_training
from .pairs import PreferencePair, pair_from_samples
from .policy import (
    GenerationConfig,
    PolicyParams,
    PromptSpace,
    nucleus_truncate,
    optimal_policy,
    policy_distribution,
    sample_response,
)
from .rewards import (
    BTRewardModel,
    OracleReward,
    PreferenceDataset,
    bt_loss,
    score,
    train_reward_model,
)
from .scheduler import (
    ScheduleState,
    SelectionStrategy,
    assemble_training_set,
    rank_prompts,
    select_prompts,
    selection_count,
)
