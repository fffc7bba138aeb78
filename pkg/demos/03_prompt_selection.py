"""Regenerate half the prompts: lowest-reward first vs uniformly at random vs everything.

Same 64 x 32 toy scenario, same seed, three schedules.  The judge samples one
response per prompt from each policy and scores both with the oracle.
"""

from optune_lab import ExperimentConfig, judge_pairwise, run_training, win_score
from optune_lab.loop import expected_reward

base = ExperimentConfig(master_seed=3)
runs = {
    "optune rho=0.5": run_training(base.replace(strategy="optune", rho=0.5)),
    "random rho=0.5": run_training(base.replace(strategy="random", rho=0.5)),
    "full   rho=1.0": run_training(base.replace(strategy="full", rho=1.0)),
}

scenario = runs["full   rho=1.0"].scenario
print(f"initial policy expected reward {expected_reward(scenario.initial_policy, scenario.oracle):.4f}\n")

for name, result in runs.items():
    trail = "  ".join(f"{r.expected_oracle_reward:.3f}" for r in result.records)
    fresh = [r.fresh_count for r in result.records]
    cost = sum(r.simulated_cost for r in result.records)
    print(f"{name}: expected reward by iteration {trail}   fresh {fresh}   cost {cost:.3f}")

# %% head to head against the initial policy, averaged over judge seeds
print()
for name, result in runs.items():
    scores = [
        win_score(judge_pairwise(result.policy, scenario.initial_policy, scenario.oracle, seed=s))
        for s in range(50)
    ]
    print(f"{name}: mean win score vs initial policy {sum(scores) / len(scores):.1f}")
