"""Reward sources: fixed oracle tables and a Bradley-Terry reward model.

The reward model is a free table r(x, y) fit by full-batch gradient descent
on the pairwise negative log-likelihood

    L = -mean log sigmoid(r(x, y_w) - r(x, y_l)).
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.special import expit, log_expit

from .errors import DomainError, NumericError
from .policy import PromptSpace

log = logging.getLogger(__name__)


class Comparison(NamedTuple):
    prompt: int
    chosen: int
    rejected: int


class PreferenceDataset:
    """Triples (prompt, chosen, rejected) with chosen != rejected."""

    def __init__(self, pairs):
        pairs = [Comparison(int(x), int(w), int(l)) for x, w, l in pairs]
        for p in pairs:
            if p.chosen == p.rejected:
                raise DomainError(f"chosen == rejected in {p}")
        self.pairs = pairs

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        a = np.array(self.pairs, dtype=np.int64).reshape(-1, 3)
        return a[:, 0], a[:, 1], a[:, 2]


class _TableReward:
    table: np.ndarray

    @property
    def space(self) -> PromptSpace:
        return PromptSpace(*self.table.shape)


@dataclass
class OracleReward(_TableReward):
    table: np.ndarray

    def __post_init__(self):
        self.table = np.array(self.table, dtype=float)
        if self.table.ndim != 2:
            raise DomainError("oracle table must be a matrix")
        if not np.all(np.isfinite(self.table)):
            raise NumericError("oracle rewards must be finite")
        self.table.flags.writeable = False


@dataclass
class BTRewardModel(_TableReward):
    params: np.ndarray
    trained: bool = False
    loss_trace: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.params = np.array(self.params, dtype=float)
        if not np.all(np.isfinite(self.params)):
            raise NumericError("reward model parameters must be finite")

    @classmethod
    def zeros(cls, space: PromptSpace) -> BTRewardModel:
        return cls(np.zeros(space.shape))

    @property
    def table(self) -> np.ndarray:
        return self.params


RewardSource = OracleReward | BTRewardModel


def score(source: RewardSource, x: int, y: int) -> float:
    space = source.space
    return float(source.table[space.check_prompt(x), space.check_response(y)])


def _margins(params: np.ndarray, data: PreferenceDataset):
    if len(data) == 0:
        raise DomainError("preference dataset is empty")
    x, w, l = data.arrays()
    return x, w, l, params[x, w] - params[x, l]


def bt_loss(rm: BTRewardModel, data: PreferenceDataset) -> float:
    *_, m = _margins(rm.params, data)
    return float(-np.mean(log_expit(m)))


def bt_loss_gradient(rm: BTRewardModel, data: PreferenceDataset) -> np.ndarray:
    x, w, l, m = _margins(rm.params, data)
    # d/dm of -log sigmoid(m) is -sigmoid(-m)
    coeff = -expit(-m) / len(data)
    grad = np.zeros_like(rm.params)
    np.add.at(grad, (x, w), coeff)
    np.add.at(grad, (x, l), -coeff)
    return grad


def train_reward_model(
    rm: BTRewardModel, data: PreferenceDataset, steps: int, lr: float
) -> BTRewardModel:
    """Full-batch gradient descent on the Bradley-Terry loss.

    Returns a new model; ``loss_trace`` holds the loss before each step and
    after the last one (``steps + 1`` entries).
    """
    if not lr > 0:
        raise DomainError(f"lr must be > 0, got {lr}")
    params = rm.params.copy()
    trace = [bt_loss(BTRewardModel(params), data)]
    for step in range(steps):
        current = BTRewardModel(params)
        params = params - lr * bt_loss_gradient(current, data)
        loss = bt_loss(BTRewardModel(params), data) if np.all(np.isfinite(params)) else np.nan
        if not np.isfinite(loss):
            raise NumericError(f"reward model training diverged at step {step}")
        trace.append(loss)
    log.debug("reward model: loss %.6f -> %.6f over %d steps", trace[0], trace[-1], steps)
    return BTRewardModel(params, trained=True, loss_trace=trace)


def label_pairs(oracle: RewardSource, comparisons) -> PreferenceDataset:
    """Orient (prompt, a, b) triples so the higher-reward response is chosen.

    Equal rewards go to the smaller response id.
    """
    out = []
    for x, a, b in comparisons:
        ra, rb = score(oracle, x, a), score(oracle, x, b)
        if ra > rb or (ra == rb and a < b):
            out.append((x, a, b))
        else:
            out.append((x, b, a))
    return PreferenceDataset(out)


def pairwise_accuracy(source: RewardSource, data: PreferenceDataset) -> float:
    """Fraction of pairs the source orders strictly correctly."""
    x, w, l = data.arrays()
    return float(np.mean(source.table[x, w] > source.table[x, l]))


def all_comparisons(space: PromptSpace):
    """Every unordered response pair for every prompt."""
    n = space.responses_per_prompt
    return [(x, a, b) for x in range(space.num_prompts) for a in range(n) for b in range(a + 1, n)]


def load_oracle_csv(path) -> OracleReward:
    """Oracle table from a headerless CSV matrix; row = prompt, column = response."""
    with open(path, newline="") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    if not rows or len({len(r) for r in rows}) != 1:
        raise DomainError(f"{path}: expected a non-empty rectangular matrix")
    return OracleReward(np.array(rows))


def save_oracle_csv(oracle: RewardSource, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        for row in oracle.table:
            writer.writerow([repr(float(v)) for v in row])
    return path
