"""Tabular policies over a finite prompt x response grid.

A policy is a logit table; row ``x`` holds the unnormalized log-probabilities
of every candidate response to prompt ``x``.  Everything here is exact:
probabilities come from a row softmax, and the KL-regularized optimum is
computed in closed form.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax, logsumexp, softmax

from .errors import DomainError, NumericError

# Stream tags for derived RNGs; one independent stream per (purpose, keys...).
SAMPLE_STREAM = 0
SELECT_STREAM = 1
JUDGE_STREAM = 2
SCENARIO_STREAM = 3
REWARD_MODEL_STREAM = 4

# Absorbs summation round-off when testing cumulative mass against top_p.
_NUCLEUS_SLACK = 1e-12


def derive_rng(master_seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for ``(master_seed, *keys)``.

    Streams for different key tuples do not overlap, so work keyed by
    (iteration, prompt) gives the same draws whether it runs sequentially
    or fanned out across threads.
    """
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), *map(int, keys)]))


@dataclass(frozen=True)
class PromptSpace:
    num_prompts: int
    responses_per_prompt: int

    def __post_init__(self):
        if self.num_prompts < 1:
            raise DomainError(f"num_prompts must be >= 1, got {self.num_prompts}")
        if self.responses_per_prompt < 2:
            raise DomainError(
                f"responses_per_prompt must be >= 2, got {self.responses_per_prompt}"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return (self.num_prompts, self.responses_per_prompt)

    def check_prompt(self, x: int) -> int:
        if not 0 <= x < self.num_prompts:
            raise DomainError(f"prompt id {x} outside [0, {self.num_prompts})")
        return int(x)

    def check_response(self, y: int) -> int:
        if not 0 <= y < self.responses_per_prompt:
            raise DomainError(f"response id {y} outside [0, {self.responses_per_prompt})")
        return int(y)


@dataclass(frozen=True)
class GenerationConfig:
    temperature: float = 1.0
    top_p: float = 0.9

    def __post_init__(self):
        if not self.temperature > 0:
            raise DomainError(f"temperature must be > 0, got {self.temperature}")
        if not 0 < self.top_p <= 1:
            raise DomainError(f"top_p must lie in (0, 1], got {self.top_p}")


class PolicyParams:
    """Logit table plus the prompt space it lives on.

    The table is copied on construction and marked read-only; updates
    produce new instances, which keeps frozen reference snapshots honest.
    """

    __slots__ = ("logits", "space")

    def __init__(self, logits, space: PromptSpace | None = None):
        logits = np.array(logits, dtype=float)
        if logits.ndim != 2:
            raise DomainError(f"logits must be a matrix, got shape {logits.shape}")
        if space is None:
            space = PromptSpace(*logits.shape)
        if logits.shape != space.shape:
            raise DomainError(f"logits shape {logits.shape} does not match space {space.shape}")
        if not np.all(np.isfinite(logits)):
            raise NumericError("policy logits must be finite")
        logits.flags.writeable = False
        self.logits = logits
        self.space = space

    @classmethod
    def uniform(cls, space: PromptSpace) -> PolicyParams:
        return cls(np.zeros(space.shape), space)

    def probs(self, temperature: float = 1.0) -> np.ndarray:
        return softmax(self.logits / temperature, axis=1)

    def log_probs(self) -> np.ndarray:
        return log_softmax(self.logits, axis=1)

    def digest(self) -> str:
        return hashlib.sha256(self.logits.tobytes()).hexdigest()

    def __eq__(self, other):
        if not isinstance(other, PolicyParams):
            return NotImplemented
        return self.space == other.space and np.array_equal(self.logits, other.logits)

    __hash__ = None

    def __repr__(self):
        return f"PolicyParams(shape={self.logits.shape}, digest={self.digest()[:12]})"


def policy_distribution(policy: PolicyParams, x: int, temperature: float = 1.0) -> np.ndarray:
    """Temperature-scaled softmax of one logit row."""
    x = policy.space.check_prompt(x)
    if not temperature > 0:
        raise DomainError(f"temperature must be > 0, got {temperature}")
    row = policy.logits[x]
    if not np.all(np.isfinite(row)):
        raise NumericError(f"non-finite logits in row {x}")
    return softmax(row / temperature)


def nucleus_truncate(probs, top_p: float) -> np.ndarray:
    """Keep the smallest high-probability prefix holding at least ``top_p`` mass.

    Entries are ordered by descending probability with ties going to the
    smaller index; everything after the cut is zeroed and the kept mass is
    renormalized.
    """
    probs = np.asarray(probs, dtype=float)
    if not 0 < top_p <= 1:
        raise DomainError(f"top_p must lie in (0, 1], got {top_p}")
    if (
        probs.ndim != 1
        or not np.all(np.isfinite(probs))
        or np.any(probs < 0)
        or abs(probs.sum() - 1.0) > 1e-9
    ):
        raise NumericError("nucleus_truncate needs a valid probability vector")
    if top_p == 1.0:
        return probs.copy()
    # stable sort on the negated mass keeps smaller ids first among ties
    order = np.argsort(-probs, kind="stable")
    cumulative = np.cumsum(probs[order])
    cut = int(np.searchsorted(cumulative, top_p - _NUCLEUS_SLACK, side="left")) + 1
    kept = order[: min(cut, probs.size)]
    out = np.zeros_like(probs)
    out[kept] = probs[kept]
    return out / out.sum()


def inverse_cdf_sample(probs: np.ndarray, u: float) -> int:
    cdf = np.cumsum(probs)
    idx = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    if idx >= probs.size:
        # u*total can land on the last breakpoint through round-off
        idx = int(np.flatnonzero(probs)[-1])
    return idx


def sampling_distribution(policy: PolicyParams, x: int, config: GenerationConfig) -> np.ndarray:
    """The distribution responses are actually drawn from under ``config``."""
    return nucleus_truncate(policy_distribution(policy, x, config.temperature), config.top_p)


def sample_response(
    policy: PolicyParams, x: int, config: GenerationConfig, rng: np.random.Generator
) -> int:
    """Draw one response id by inverse-CDF sampling with one uniform from ``rng``."""
    return inverse_cdf_sample(sampling_distribution(policy, x, config), rng.random())


def optimal_policy(reference: PolicyParams, rewards, beta: float) -> PolicyParams:
    """Closed-form maximizer of expected reward minus ``beta`` * KL(pi || reference).

    pi(y|x) = reference(y|x) * exp(r(x, y) / beta) / Z(x), evaluated in log
    space so small ``beta`` cannot overflow.  The returned logits are the
    normalized log-probabilities.
    """
    if not beta > 0:
        raise DomainError(f"beta must be > 0, got {beta}")
    rewards = np.asarray(rewards, dtype=float)
    if rewards.shape != reference.logits.shape:
        raise DomainError(f"rewards shape {rewards.shape} != policy shape {reference.logits.shape}")
    if not np.all(np.isfinite(rewards)):
        raise NumericError("rewards must be finite")
    unnormalized = reference.log_probs() + rewards / beta
    log_z = logsumexp(unnormalized, axis=1, keepdims=True)
    return PolicyParams(unnormalized - log_z, reference.space)


def log_partition(reference: PolicyParams, rewards, beta: float) -> np.ndarray:
    """ln Z(x) for every prompt."""
    rewards = np.asarray(rewards, dtype=float)
    return logsumexp(reference.log_probs() + rewards / beta, axis=1)
