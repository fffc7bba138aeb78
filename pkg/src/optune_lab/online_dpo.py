"""Vanilla iterative online DPO: every prompt is regenerated every round.

A direct transcription of the textbook loop with no scheduler, cache or
ranking.  It shares the sampling streams and loss code with ``loop`` so a
fully online OPTune run (rho = 1) must reproduce it bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

from .config import ExperimentConfig
from .losses import apply_step, loss_gradient, loss_value
from .pairs import PreferencePair, pair_from_samples
from .policy import SAMPLE_STREAM, PolicyParams, derive_rng, sample_response
from .rewards import RewardSource, score


@dataclass
class OnlineDPORound:
    training_set: list[PreferencePair]
    loss_trace: list[float]


def run_online_dpo(
    policy: PolicyParams, reward: RewardSource, config: ExperimentConfig
) -> tuple[PolicyParams, list[OnlineDPORound]]:
    rounds = []
    for t in range(config.iterations):
        reference = policy
        training_set = []
        for x in range(config.num_prompts):
            rng = derive_rng(config.master_seed, SAMPLE_STREAM, t, x)
            y1 = sample_response(reference, x, config.generation, rng)
            y2 = sample_response(reference, x, config.generation, rng)
            r1, r2 = score(reward, x, y1), score(reward, x, y2)
            training_set.append(pair_from_samples(x, y1, y2, r1, r2, t))

        trace = []
        for _ in range(config.inner_steps):
            trace.append(loss_value(policy, reference, training_set, config.loss))
            policy = apply_step(
                policy, loss_gradient(policy, reference, training_set, config.loss), config.lr
            )
        rounds.append(OnlineDPORound(training_set, trace))
    return policy, rounds
