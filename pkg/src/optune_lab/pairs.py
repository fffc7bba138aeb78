"""The preference pair, the unit of DPO/wDPO training data."""

from __future__ import annotations

from dataclasses import asdict, dataclass


@dataclass(frozen=True)
class PreferencePair:
    prompt: int
    chosen: int
    rejected: int
    reward_chosen: float | None = None
    reward_rejected: float | None = None
    origin_iteration: int = 0
    fresh: bool = True

    @property
    def degenerate(self) -> bool:
        """Both sampled responses were the same; the pair carries no signal."""
        return self.chosen == self.rejected

    @property
    def has_rewards(self) -> bool:
        return self.reward_chosen is not None and self.reward_rejected is not None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> PreferencePair:
        return cls(**d)


def pair_from_samples(
    x: int, y1: int, y2: int, r1: float, r2: float, iteration: int
) -> PreferencePair:
    """Order two scored samples into (chosen, rejected).

    The higher reward wins; on a reward tie the smaller response id is chosen.
    """
    if r1 > r2 or (r1 == r2 and y1 <= y2):
        w, l, rw, rl = y1, y2, r1, r2
    else:
        w, l, rw, rl = y2, y1, r2, r1
    return PreferencePair(int(x), int(w), int(l), float(rw), float(rl), int(iteration), True)
