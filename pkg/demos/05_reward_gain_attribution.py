"""Where does next round's reward gain come from under fully online training?

Prompts are split by the rank of their chosen-response reward in the
previous round.  Low-reward prompts tend to improve; high-reward prompts
tend to regress toward their mean, which is the case for regenerating the
former and reusing the latter.
"""

import numpy as np

from optune_lab import ExperimentConfig, reward_gain_attribution, run_training

wins = larger_gain = 0
for seed in range(10):
    result = run_training(ExperimentConfig(master_seed=seed, strategy="full", rho=1.0))
    prev, curr = result.records[1], result.records[2]
    before = np.array(prev.per_prompt_chosen_reward)
    ranking = sorted(range(before.size), key=lambda x: (before[x], x))
    report = reward_gain_attribution(prev, curr, ranking)
    wins += report.bottom_half_share > report.top_half_share
    larger_gain += report.bottom_half_gain > report.top_half_gain
    print(
        f"seed {seed}: total gain {report.total_gain:+7.3f}   "
        f"bottom half {report.bottom_half_gain:+7.3f}   top half {report.top_half_gain:+7.3f}"
    )
print(f"\nbottom half carries the larger share in {wins}/10 seeds")
# a negative total flips the sign of both shares, so compare raw gains too
print(f"bottom half gains more than the top half in {larger_gain}/10 seeds")
