"""Evaluation: win score, an oracle pairwise judge, reward-gain attribution,
and the exact KL-regularized objective.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Literal, Sequence

import numpy as np
from scipy.special import rel_entr

from .errors import DomainError, NumericError
from .policy import (
    JUDGE_STREAM,
    GenerationConfig,
    PolicyParams,
    derive_rng,
    inverse_cdf_sample,
    sampling_distribution,
)
from .rewards import RewardSource

Verdict = Literal["win", "lose", "tie"]


@dataclass(frozen=True)
class JudgeOutcome:
    verdicts: tuple[Verdict, ...]

    @property
    def n(self) -> int:
        return len(self.verdicts)

    @property
    def n_win(self) -> int:
        return self.verdicts.count("win")

    @property
    def n_lose(self) -> int:
        return self.verdicts.count("lose")

    @property
    def n_tie(self) -> int:
        return self.verdicts.count("tie")

    @classmethod
    def from_counts(cls, n_win: int, n_lose: int, n: int) -> JudgeOutcome:
        if min(n_win, n_lose, n) < 0 or n_win + n_lose > n:
            raise DomainError(f"inconsistent counts win={n_win} lose={n_lose} n={n}")
        return cls(("win",) * n_win + ("lose",) * n_lose + ("tie",) * (n - n_win - n_lose))


def win_score(outcome: JudgeOutcome) -> float:
    """50 + 100 * (n_win - n_lose) / n; 50 is parity with the baseline."""
    if outcome.n == 0:
        raise DomainError("win score needs at least one judged prompt")
    return 50.0 + 100.0 * (outcome.n_win - outcome.n_lose) / outcome.n


def judge_pairwise(
    policy_a: PolicyParams,
    policy_b: PolicyParams,
    oracle: RewardSource,
    prompts: Sequence[int] | None = None,
    tie_epsilon: float = 0.0,
    seed: int = 0,
    generation: GenerationConfig | None = None,
) -> JudgeOutcome:
    """Compare one sampled response from each policy per prompt under the oracle.

    Both sides are sampled by inverse CDF from the same per-prompt uniform
    (common random numbers), so identical policies always tie and swapping
    the policies swaps wins and losses exactly.
    """
    if tie_epsilon < 0:
        raise DomainError(f"tie_epsilon must be >= 0, got {tie_epsilon}")
    if policy_a.space != policy_b.space:
        raise DomainError("policies live on different prompt spaces")
    generation = generation or GenerationConfig()
    if prompts is None:
        prompts = range(policy_a.space.num_prompts)
    verdicts = []
    for x in prompts:
        u = derive_rng(seed, JUDGE_STREAM, x).random()
        ya = inverse_cdf_sample(sampling_distribution(policy_a, x, generation), u)
        yb = inverse_cdf_sample(sampling_distribution(policy_b, x, generation), u)
        ra, rb = oracle.table[x, ya], oracle.table[x, yb]
        if ra > rb + tie_epsilon:
            verdicts.append("win")
        elif rb > ra + tie_epsilon:
            verdicts.append("lose")
        else:
            verdicts.append("tie")
    return JudgeOutcome(tuple(verdicts))


@dataclass(frozen=True)
class AttributionReport:
    total_gain: float
    top_half_share: float | None
    bottom_half_share: float | None
    top_half_gain: float = 0.0
    bottom_half_gain: float = 0.0

    @property
    def defined(self) -> bool:
        return self.top_half_share is not None

    def to_dict(self) -> dict:
        return asdict(self)


def reward_gain_attribution(prev, curr, prev_ranking: Sequence[int]) -> AttributionReport:
    """Split the per-prompt chosen-reward gain between the two halves of ``prev_ranking``.

    ``prev_ranking`` is ascending by reward, so its first half (rounded down)
    is the bottom half.  A zero total gain yields undefined (None) shares.
    """
    before = np.asarray(prev.per_prompt_chosen_reward, dtype=float)
    after = np.asarray(curr.per_prompt_chosen_reward, dtype=float)
    if before.shape != after.shape or sorted(prev_ranking) != list(range(before.size)):
        raise DomainError("records and ranking must cover the same prompt set")
    gain = after - before
    ranking = np.asarray(prev_ranking)
    half = ranking.size // 2
    bottom = float(gain[ranking[:half]].sum())
    top = float(gain[ranking[half:]].sum())
    total = float(gain.sum())
    if total == 0:
        return AttributionReport(0.0, None, None, top, bottom)
    return AttributionReport(total, top / total, bottom / total, top, bottom)


def _as_probs(policy) -> np.ndarray:
    if isinstance(policy, PolicyParams):
        return policy.probs()
    probs = np.asarray(policy, dtype=float)
    if np.any(probs < 0) or not np.allclose(probs.sum(axis=1), 1.0, atol=1e-12):
        raise DomainError("probability table rows must be distributions")
    return probs


def rl_objective(policy, reference, oracle: RewardSource, alpha: float) -> float:
    """mean_x ( E_{y~pi}[r(x, y)] - alpha * KL(pi(.|x) || ref(.|x)) ), by enumeration.

    ``policy`` and ``reference`` may be PolicyParams or row-stochastic
    probability tables; the latter admit point masses.
    """
    if not alpha > 0:
        raise DomainError(f"alpha must be > 0, got {alpha}")
    pi, ref = _as_probs(policy), _as_probs(reference)
    kl = rel_entr(pi, ref).sum(axis=1)
    if not np.all(np.isfinite(kl)):
        raise NumericError("policy puts mass where the reference has none")
    return float(np.mean((pi * oracle.table).sum(axis=1) - alpha * kl))


def rl_objective_gradient(
    policy: PolicyParams, reference: PolicyParams, oracle: RewardSource, alpha: float
) -> np.ndarray:
    """Gradient of ``rl_objective`` with respect to the policy logits."""
    pi = policy.probs()
    value = oracle.table - alpha * (policy.log_probs() - reference.log_probs())
    centered = value - (pi * value).sum(axis=1, keepdims=True)
    return pi * centered / pi.shape[0]
