"""Reward-based prompt selection with response-cache reuse.

Each iteration regenerates N = ceil(rho * |P|) prompts and reuses the
cached preference pair for every other prompt.  The ``optune`` strategy
picks the N prompts whose current chosen response scored lowest; ``random``
picks N uniformly; ``full`` regenerates everything.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Literal, Mapping, Sequence

import numpy as np

from .errors import DomainError, StateCorruptionError
from .pairs import PreferencePair

StrategyKind = Literal["optune", "random", "full"]
STRATEGIES: tuple[str, ...] = ("optune", "random", "full")


@dataclass(frozen=True)
class SelectionStrategy:
    kind: StrategyKind = "optune"

    def __post_init__(self):
        if self.kind not in STRATEGIES:
            raise DomainError(f"strategy must be one of {STRATEGIES}, got {self.kind!r}")


@dataclass
class ScheduleState:
    ranked_prompts: list[int]
    cache: dict[int, PreferencePair] = field(default_factory=dict)
    rho: float = 1.0
    iteration: int = 0

    def __post_init__(self):
        self.ranked_prompts = [int(p) for p in self.ranked_prompts]
        if sorted(self.ranked_prompts) != list(range(len(self.ranked_prompts))):
            raise StateCorruptionError("ranked_prompts is not a permutation of the prompt ids")
        _check_rho(self.rho)

    @classmethod
    def initial(cls, num_prompts: int, rho: float) -> ScheduleState:
        return cls(list(range(num_prompts)), {}, rho, 0)

    @property
    def num_prompts(self) -> int:
        return len(self.ranked_prompts)

    def to_dict(self) -> dict:
        return {
            "ranked_prompts": list(self.ranked_prompts),
            "cache": [self.cache[k].to_dict() for k in sorted(self.cache)],
            "rho": self.rho,
            "iteration": self.iteration,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> ScheduleState:
        cache = {}
        for item in d["cache"]:
            pair = PreferencePair.from_dict(item)
            cache[pair.prompt] = pair
        return cls(list(d["ranked_prompts"]), cache, float(d["rho"]), int(d["iteration"]))


def _check_rho(rho: float) -> None:
    if not 0 < rho <= 1:
        raise DomainError("rho must lie in (0, 1]")


def selection_count(rho: float, num_prompts: int) -> int:
    _check_rho(rho)
    if num_prompts < 1:
        raise DomainError(f"num_prompts must be >= 1, got {num_prompts}")
    # rho * n can land a hair above an integer (0.7 * 10 = 7.000000000000001)
    product = rho * num_prompts
    nearest = round(product)
    n = nearest if math.isclose(product, nearest, rel_tol=0, abs_tol=1e-9) else math.ceil(product)
    return min(max(int(n), 1), num_prompts)


def select_prompts(
    state: ScheduleState, strategy: SelectionStrategy, rng: np.random.Generator | None = None
) -> list[int]:
    if not state.ranked_prompts:
        raise DomainError("no prompts to select from")
    if strategy.kind == "full":
        return list(state.ranked_prompts)
    n = selection_count(state.rho, state.num_prompts)
    if strategy.kind == "optune":
        return list(state.ranked_prompts[:n])
    if rng is None:
        raise DomainError("random selection needs an rng")
    picks = rng.choice(state.num_prompts, size=n, replace=False)
    return [int(p) for p in picks]


def assemble_training_set(
    state: ScheduleState, fresh_pairs: Mapping[int, PreferencePair]
) -> list[PreferencePair]:
    """One pair per prompt, ordered by prompt id: fresh where regenerated, cached elsewhere."""
    batch = []
    for x in range(state.num_prompts):
        if x in fresh_pairs:
            batch.append(fresh_pairs[x])
        elif x in state.cache:
            batch.append(replace(state.cache[x], fresh=False))
        else:
            raise StateCorruptionError(f"prompt {x} was not regenerated and has no cached pair")
    extra = set(fresh_pairs) - set(range(state.num_prompts))
    if extra:
        raise DomainError(f"fresh pairs for unknown prompts: {sorted(extra)}")
    return batch


def rank_prompts(batch: Sequence[PreferencePair]) -> list[int]:
    """Prompt ids by ascending chosen reward, ties to the smaller id."""
    prompts = [p.prompt for p in batch]
    if len(set(prompts)) != len(prompts):
        raise DomainError("batch contains a prompt more than once")
    return [p.prompt for p in sorted(batch, key=lambda p: (p.reward_chosen, p.prompt))]
