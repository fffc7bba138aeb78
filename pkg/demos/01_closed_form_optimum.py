"""The KL-regularized optimum on a 4 x 4 grid, and plain gradient ascent finding it."""

import numpy as np

from optune_lab import OracleReward, PolicyParams, optimal_policy, rl_objective
from optune_lab.evaluation import rl_objective_gradient

np.set_printoptions(precision=3, suppress=True)
rng = np.random.default_rng(0)

reference = PolicyParams(rng.normal(size=(4, 4)))
oracle = OracleReward(rng.normal(size=(4, 4)))

# %% the optimum reweights the reference by exp(r / alpha)
for alpha in (10.0, 1.0, 0.1):
    star = optimal_policy(reference, oracle.table, alpha)
    print(f"alpha={alpha:<5} row 0: {star.probs()[0]}  objective {rl_objective(star, reference, oracle, alpha):.4f}")
print("reference row 0:", reference.probs()[0])
print("rewards row 0:  ", oracle.table[0])

# %% nothing we try beats it
alpha = 0.5
star = optimal_policy(reference, oracle.table, alpha)
best = rl_objective(star, reference, oracle, alpha)
rivals = [rl_objective(PolicyParams(rng.normal(scale=2, size=(4, 4))), reference, oracle, alpha) for _ in range(2000)]
print(f"\noptimum {best:.4f}, best of 2000 random policies {max(rivals):.4f}")

# %% gradient ascent from the reference walks onto the same point
policy = reference
for step in range(1, 5001):
    policy = PolicyParams(policy.logits + 20 * rl_objective_gradient(policy, reference, oracle, alpha))
    if step in (1, 10, 100, 1000, 5000):
        tv = 0.5 * np.abs(policy.probs() - star.probs()).sum(axis=1).max()
        print(f"step {step:>5}: worst-row total variation to the optimum {tv:.2e}")
