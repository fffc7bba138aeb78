"""Iterative online preference tuning with reward-based prompt selection.

One iteration: freeze the current policy as the reference, pick prompts to
regenerate, sample two responses for each, label them with the reward
source, merge with cached pairs, take ``inner_steps`` gradient steps on
DPO/wDPO, and re-rank prompts by chosen reward for the next round.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import efficiency
from .config import ExperimentConfig
from .errors import LogFormatError
from .losses import RMSProp, apply_step, loss_gradient, loss_value
from .pairs import PreferencePair, pair_from_samples
from .policy import (
    REWARD_MODEL_STREAM,
    SAMPLE_STREAM,
    SCENARIO_STREAM,
    SELECT_STREAM,
    PolicyParams,
    derive_rng,
    sample_response,
)
from .rewards import (
    BTRewardModel,
    OracleReward,
    RewardSource,
    label_pairs,
    load_oracle_csv,
    score,
    train_reward_model,
)
from .scheduler import (
    ScheduleState,
    SelectionStrategy,
    assemble_training_set,
    rank_prompts,
    select_prompts,
)

log = logging.getLogger(__name__)

StepHook = Callable[[int, PolicyParams, PolicyParams], None]


@dataclass
class IterationRecord:
    iteration: int
    per_prompt_chosen_reward: list[float]
    mean_chosen_reward: float
    loss_trace: list[float]
    fresh_count: int
    reused_count: int
    simulated_cost: float
    expected_oracle_reward: float
    regenerated: list[int]
    wall_time_ms: int = field(default=0, compare=False)

    def to_log_dict(self) -> dict:
        """Log fields; wall time is excluded so logs stay byte-reproducible."""
        d = asdict(self)
        del d["wall_time_ms"]
        return d


@dataclass
class Scenario:
    oracle: OracleReward
    initial_policy: PolicyParams


@dataclass
class RunResult:
    records: list[IterationRecord]
    policy: PolicyParams
    state: ScheduleState
    scenario: Scenario


def build_scenario(config: ExperimentConfig) -> Scenario:
    """Oracle reward table and starting policy for a config.

    Generated rewards are N(0, reward_scale^2); generated initial logits are
    N(0, init_logit_scale^2), mimicking an SFT policy with uneven preferences.
    """
    rng = derive_rng(config.resolved_scenario_seed, SCENARIO_STREAM)
    shape = config.space.shape
    rewards = rng.normal(0.0, config.reward_scale, size=shape)
    logits = rng.normal(0.0, config.init_logit_scale, size=shape)
    if config.oracle_csv is not None:
        oracle = load_oracle_csv(config.oracle_csv)
        if oracle.table.shape != shape:
            raise ValueError(f"{config.oracle_csv}: table shape {oracle.table.shape} != {shape}")
    else:
        oracle = OracleReward(rewards)
    return Scenario(oracle, PolicyParams(logits, config.space))


def expected_reward(policy: PolicyParams, source: RewardSource) -> float:
    """Mean over prompts of E_{y ~ pi(.|x)} r(x, y), computed exactly."""
    return float(np.mean(np.sum(policy.probs() * source.table, axis=1)))


def learned_reward_model(config: ExperimentConfig, oracle: OracleReward) -> BTRewardModel:
    """Fit a Bradley-Terry table on oracle-labeled random comparisons."""
    rng = derive_rng(config.resolved_scenario_seed, REWARD_MODEL_STREAM)
    n = config.responses_per_prompt
    comparisons = []
    for x in range(config.num_prompts):
        for _ in range(config.rm_pairs_per_prompt):
            a, b = rng.choice(n, size=2, replace=False)
            comparisons.append((x, int(a), int(b)))
    data = label_pairs(oracle, comparisons)
    return train_reward_model(BTRewardModel.zeros(config.space), data, config.rm_steps, config.rm_lr)


def reward_source_for(config: ExperimentConfig, scenario: Scenario) -> RewardSource:
    if config.reward_source == "learned":
        return learned_reward_model(config, scenario.oracle)
    return scenario.oracle


def generate_pair(
    policy: PolicyParams,
    reward: RewardSource,
    config: ExperimentConfig,
    iteration: int,
    x: int,
) -> PreferencePair:
    rng = derive_rng(config.master_seed, SAMPLE_STREAM, iteration, x)
    y1 = sample_response(policy, x, config.generation, rng)
    y2 = sample_response(policy, x, config.generation, rng)
    return pair_from_samples(x, y1, y2, score(reward, x, y1), score(reward, x, y2), iteration)


def generate_pairs(policy, reward, config: ExperimentConfig, iteration: int, prompts) -> dict:
    """Fresh pairs for ``prompts``, keyed by prompt id; thread fan-out when workers > 1."""
    prompts = sorted(prompts)
    if config.workers > 1:
        with ThreadPoolExecutor(config.workers) as pool:
            pairs = list(
                pool.map(lambda x: generate_pair(policy, reward, config, iteration, x), prompts)
            )
    else:
        pairs = [generate_pair(policy, reward, config, iteration, x) for x in prompts]
    return dict(zip(prompts, pairs))


def optimize(
    policy: PolicyParams,
    reference: PolicyParams,
    batch: list[PreferencePair],
    config: ExperimentConfig,
    on_step: StepHook | None = None,
) -> tuple[PolicyParams, list[float]]:
    """``inner_steps`` descent steps against a frozen reference; returns the pre-step losses."""
    optimizer = RMSProp() if config.optimizer == "rmsprop" else None
    trace = []
    for step in range(config.inner_steps):
        if on_step is not None:
            on_step(step, policy, reference)
        trace.append(loss_value(policy, reference, batch, config.loss))
        grad = loss_gradient(policy, reference, batch, config.loss)
        if optimizer is None:
            policy = apply_step(policy, grad, config.lr)
        else:
            policy = optimizer.step(policy, grad, config.lr)
    return policy, trace


def run_iteration(
    state: ScheduleState,
    policy: PolicyParams,
    reward: RewardSource,
    config: ExperimentConfig,
    oracle: RewardSource | None = None,
    on_step: StepHook | None = None,
) -> tuple[ScheduleState, PolicyParams, IterationRecord]:
    started = time.perf_counter()
    t = state.iteration
    reference = policy
    # nothing cached yet: every prompt has to be generated
    strategy = SelectionStrategy("full") if not state.cache else config.selection
    selected = select_prompts(state, strategy, derive_rng(config.master_seed, SELECT_STREAM, t))
    fresh = generate_pairs(reference, reward, config, t, selected)
    batch = assemble_training_set(state, fresh)
    policy, trace = optimize(policy, reference, batch, config, on_step)

    next_state = ScheduleState(
        rank_prompts(batch), {p.prompt: p for p in batch}, state.rho, t + 1
    )
    chosen = [p.reward_chosen for p in batch]
    fraction = len(fresh) / state.num_prompts
    record = IterationRecord(
        iteration=t,
        per_prompt_chosen_reward=chosen,
        mean_chosen_reward=float(np.mean(chosen)),
        loss_trace=trace,
        fresh_count=len(fresh),
        reused_count=state.num_prompts - len(fresh),
        simulated_cost=efficiency.iteration_cost(config.cost_model, fraction),
        expected_oracle_reward=expected_reward(policy, oracle if oracle is not None else reward),
        regenerated=sorted(fresh),
        wall_time_ms=int(round((time.perf_counter() - started) * 1000)),
    )
    log.info(
        "iter %d: fresh=%d reused=%d loss %.4f -> %.4f expected reward %.4f",
        t, record.fresh_count, record.reused_count, trace[0], trace[-1],
        record.expected_oracle_reward,
    )
    return next_state, policy, record


# --- run logs ---------------------------------------------------------------

def _log_line(record: IterationRecord, state: ScheduleState, policy: PolicyParams) -> str:
    payload = record.to_log_dict()
    payload["checkpoint"] = {"state": state.to_dict(), "logits": policy.logits.tolist()}
    return json.dumps(payload, separators=(",", ":"))


_RECORD_KEYS = set(IterationRecord.__dataclass_fields__) - {"wall_time_ms"}


def read_log(path) -> list[dict]:
    """Parse a JSONL run log; each entry is one iteration's object."""
    path = Path(path)
    if not path.exists():
        raise LogFormatError(path, 0, "log file does not exist")
    entries = []
    with path.open() as fh:
        for line_no, line in enumerate(fh, start=1):
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LogFormatError(path, line_no, f"invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise LogFormatError(path, line_no, "expected a JSON object")
            missing = _RECORD_KEYS - set(obj)
            if missing:
                raise LogFormatError(path, line_no, f"missing fields {sorted(missing)}")
            if obj["iteration"] != line_no - 1:
                raise LogFormatError(path, line_no, f"expected iteration {line_no - 1}")
            entries.append(obj)
    return entries


def record_from_entry(entry: dict) -> IterationRecord:
    return IterationRecord(**{k: entry[k] for k in _RECORD_KEYS})


def checkpoint_from_entry(entry: dict, config: ExperimentConfig):
    ck = entry["checkpoint"]
    return ScheduleState.from_dict(ck["state"]), PolicyParams(ck["logits"], config.space)


def run_training(config: ExperimentConfig, log_path=None, on_step: StepHook | None = None) -> RunResult:
    """Run all ``config.iterations`` rounds, appending one JSONL line per round.

    An existing log is resumed from its last complete iteration; a finished
    log is read back without recomputation.
    """
    scenario = build_scenario(config)
    reward = reward_source_for(config, scenario)
    state = ScheduleState.initial(config.num_prompts, config.rho)
    policy = scenario.initial_policy
    records: list[IterationRecord] = []

    if log_path is not None:
        log_path = Path(log_path)
        if log_path.exists():
            entries = read_log(log_path)[: config.iterations]
            records = [record_from_entry(e) for e in entries]
            if entries:
                state, policy = checkpoint_from_entry(entries[-1], config)
                log.info("resuming %s at iteration %d", log_path, state.iteration)
        log_path.parent.mkdir(parents=True, exist_ok=True)

    fh = log_path.open("a") if log_path is not None else None
    try:
        while state.iteration < config.iterations:
            state, policy, record = run_iteration(
                state, policy, reward, config, scenario.oracle, on_step
            )
            records.append(record)
            if fh is not None:
                fh.write(_log_line(record, state, policy) + "\n")
                fh.flush()
    finally:
        if fh is not None:
            fh.close()
    return RunResult(records, policy, state, scenario)


def run_experiment(config: ExperimentConfig, log_path=None) -> list[IterationRecord]:
    return run_training(config, log_path).records
