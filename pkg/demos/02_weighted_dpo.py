"""How the reward-gap weight changes what a DPO step pays attention to."""

import numpy as np

from optune_lab import LossConfig, PolicyParams, PreferencePair, loss_gradient, wdpo_weight
from optune_lab.losses import loss_value

# two pairs on one prompt with identical margins but very different reward gaps
pairs = [
    PreferencePair(0, 0, 1, reward_chosen=0.05, reward_rejected=0.0),  # near tie
    PreferencePair(0, 2, 3, reward_chosen=3.0, reward_rejected=0.0),  # clear winner
]
for p in pairs:
    print(f"gap {p.reward_chosen - p.reward_rejected:.2f}: weight {wdpo_weight(p, 1.0):.3f}")

reference = PolicyParams(np.zeros((1, 4)))
policy = reference
dpo, wdpo = LossConfig(0.1, 1.0, "dpo"), LossConfig(0.1, 1.0, "wdpo")

print("\nDPO gradient  ", loss_gradient(policy, reference, pairs, dpo)[0])
print("wDPO gradient ", loss_gradient(policy, reference, pairs, wdpo)[0])
# plain DPO pushes both pairs equally; wDPO leans on the informative one

# %% with beta2 = 0 every weight is one half, so wDPO is exactly half of DPO
flat = LossConfig(0.1, 0.0, "wdpo")
print("\nbeta2=0: wDPO / DPO loss ratio =",
      loss_value(policy, reference, pairs, flat) / loss_value(policy, reference, pairs, dpo))

# %% a few hundred steps on each loss
for cfg in (dpo, wdpo):
    p = policy
    for _ in range(300):
        p = PolicyParams(p.logits - 50 * loss_gradient(p, reference, pairs, cfg))
    print(f"{cfg.kind:>4}: final probabilities {np.round(p.probs()[0], 3)}")
