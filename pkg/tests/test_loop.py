import json

import numpy as np
import pytest
from scipy.stats import binomtest

from optune_lab.config import ExperimentConfig
from optune_lab.errors import LogFormatError
from optune_lab.loop import (
    build_scenario,
    expected_reward,
    read_log,
    run_experiment,
    run_iteration,
    run_training,
)
from optune_lab.online_dpo import run_online_dpo
from optune_lab.rewards import OracleReward, save_oracle_csv, score
from optune_lab.scheduler import ScheduleState, selection_count

SMALL = ExperimentConfig(num_prompts=12, responses_per_prompt=6, iterations=3, inner_steps=8, master_seed=5)


def test_fresh_counts_follow_iteration_zero_rule():
    records = run_experiment(SMALL)
    assert [r.fresh_count for r in records] == [12, 6, 6]
    assert all(r.fresh_count + r.reused_count == 12 for r in records)
    assert all(len(r.loss_trace) == SMALL.inner_steps for r in records)
    assert [r.iteration for r in records] == [0, 1, 2]


def test_fresh_count_is_ceiling():
    cfg = SMALL.replace(num_prompts=7, rho=0.3)
    assert run_experiment(cfg)[1].fresh_count == selection_count(0.3, 7) == 3


def test_simulated_cost():
    records = run_experiment(SMALL)
    assert records[0].simulated_cost == 1.0
    assert records[1].simulated_cost == pytest.approx(0.6405, abs=1e-12)


def test_same_seed_same_records():
    assert run_experiment(SMALL) == run_experiment(SMALL)
    assert run_experiment(SMALL) != run_experiment(SMALL.replace(master_seed=6))


def test_full_strategy_equals_optune_at_rho_one():
    a = run_experiment(SMALL.replace(rho=1.0, strategy="optune"))
    b = run_experiment(SMALL.replace(rho=1.0, strategy="full"))
    assert a == b
    assert all(r.reused_count == 0 for r in a)


def test_full_strategy_ignores_rho():
    records = run_experiment(SMALL.replace(rho=0.25, strategy="full"))
    assert [r.fresh_count for r in records] == [12, 12, 12]


def test_matches_vanilla_online_dpo():
    cfg = SMALL.replace(rho=1.0)
    scenario = build_scenario(cfg)
    vanilla_policy, rounds = run_online_dpo(scenario.initial_policy, scenario.oracle, cfg)
    state, policy = ScheduleState.initial(cfg.num_prompts, 1.0), scenario.initial_policy
    for t in range(cfg.iterations):
        state, policy, record = run_iteration(state, policy, scenario.oracle, cfg)
        assert [state.cache[x] for x in range(cfg.num_prompts)] == rounds[t].training_set
        assert record.loss_trace == rounds[t].loss_trace
    assert np.array_equal(policy.logits, vanilla_policy.logits)


def test_reference_is_frozen_within_iteration():
    seen, calls = {}, []

    def hook(step, policy, reference):
        seen.setdefault(len(calls) // SMALL.inner_steps, set()).add(reference.digest())
        calls.append(step)

    run_training(SMALL, on_step=hook)
    assert len(seen) == SMALL.iterations
    assert all(len(digests) == 1 for digests in seen.values())


def test_reward_consistency():
    scenario = build_scenario(SMALL)
    state, policy = ScheduleState.initial(12, SMALL.rho), scenario.initial_policy
    history = {}
    for _ in range(SMALL.iterations):
        state, policy, record = run_iteration(state, policy, scenario.oracle, SMALL)
        for x, pair in state.cache.items():
            if pair.fresh and pair.origin_iteration == record.iteration:
                assert pair.reward_chosen == score(scenario.oracle, x, pair.chosen)
                assert pair.reward_rejected == score(scenario.oracle, x, pair.rejected)
                history[x] = pair
            else:
                assert pair.fresh is False
                assert pair == history[x].__class__(**{**history[x].to_dict(), "fresh": False})
        assert record.regenerated == sorted(p.prompt for p in state.cache.values() if p.fresh)


def test_parallel_sampling_is_identical(tmp_path):
    run_training(SMALL, tmp_path / "a.jsonl")
    run_training(SMALL.replace(workers=4), tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_resume_from_partial_log(tmp_path):
    full, partial = tmp_path / "full.jsonl", tmp_path / "partial.jsonl"
    reference = run_training(SMALL, full)
    run_training(SMALL.replace(iterations=1), partial)
    resumed = run_training(SMALL, partial)
    assert partial.read_bytes() == full.read_bytes()
    assert resumed.policy == reference.policy
    assert resumed.records == reference.records


def test_finished_log_is_not_recomputed(tmp_path):
    path = tmp_path / "run.jsonl"
    run_training(SMALL, path)
    before = path.read_bytes()
    run_training(SMALL, path)
    assert path.read_bytes() == before
    assert len(before.splitlines()) == SMALL.iterations


def test_log_lines_are_fixed_field_objects(tmp_path):
    path = tmp_path / "run.jsonl"
    run_training(SMALL, path)
    entries = read_log(path)
    assert [set(e) for e in entries] == [set(entries[0])] * 3
    assert "wall_time_ms" not in entries[0] and "checkpoint" in entries[0]


@pytest.mark.parametrize(
    "text, line",
    [
        ('{"iteration": 0}\n', 1),
        ("not json\n", 1),
        ("[1, 2]\n", 1),
    ],
)
def test_corrupt_log_names_line(tmp_path, text, line):
    path = tmp_path / "bad.jsonl"
    path.write_text(text)
    with pytest.raises(LogFormatError, match=f"bad.jsonl:{line}:"):
        read_log(path)


def test_truncated_log_line(tmp_path):
    path = tmp_path / "run.jsonl"
    run_training(SMALL, path)
    lines = path.read_text().splitlines()
    path.write_text(lines[0] + "\n" + lines[1][: len(lines[1]) // 2] + "\n")
    with pytest.raises(LogFormatError, match="run.jsonl:2:"):
        run_training(SMALL, path)


def test_out_of_order_log(tmp_path):
    path = tmp_path / "run.jsonl"
    run_training(SMALL, path)
    lines = path.read_text().splitlines()
    path.write_text(lines[1] + "\n")
    with pytest.raises(LogFormatError, match="expected iteration 0"):
        read_log(path)


def test_learned_reward_source():
    cfg = SMALL.replace(reward_source="learned", rm_steps=300)
    result = run_training(cfg)
    assert len(result.records) == 3
    initial = expected_reward(result.scenario.initial_policy, result.scenario.oracle)
    assert result.records[-1].expected_oracle_reward > initial


def test_oracle_csv_scenario(tmp_path, rng):
    table = rng.normal(size=(SMALL.num_prompts, SMALL.responses_per_prompt))
    path = save_oracle_csv(OracleReward(table), tmp_path / "oracle.csv")
    scenario = build_scenario(SMALL.replace(oracle_csv=str(path)))
    np.testing.assert_array_equal(scenario.oracle.table, table)
    with pytest.raises(ValueError):
        build_scenario(SMALL.replace(oracle_csv=str(path), num_prompts=5))


def test_rmsprop_optimizer_runs():
    records = run_experiment(SMALL.replace(optimizer="rmsprop", lr=0.05))
    assert all(np.isfinite(r.loss_trace).all() for r in records)


@pytest.mark.slow
def test_mean_chosen_reward_rises_on_standard_scenario():
    rising = 0
    for seed in range(10):
        records = run_experiment(ExperimentConfig(master_seed=seed))
        means = [r.mean_chosen_reward for r in records]
        rising += all(b >= a for a, b in zip(means, means[1:]))
    assert rising >= 9


@pytest.mark.slow
def test_fully_online_wdpo_improves_expected_reward():
    improved = 0
    for seed in range(10):
        result = run_training(ExperimentConfig(master_seed=seed, rho=1.0, strategy="full"))
        initial = expected_reward(result.scenario.initial_policy, result.scenario.oracle)
        improved += result.records[-1].expected_oracle_reward > initial
    assert binomtest(improved, 10, alternative="greater").pvalue < 0.05
