"""DPO and weighted-DPO losses over tabular policies, with exact gradients.

For a pair (x, y_w, y_l) the implicit-reward margin is

    m = beta1 * [log pi(y_w|x)/ref(y_w|x) - log pi(y_l|x)/ref(y_l|x)]

DPO minimizes mean(-log sigmoid(m)).  wDPO scales each term by
R = sigmoid(beta2 * (r_w - r_l)), the sigmoid of the explicit reward gap.
Both losses share one weighted code path; DPO is the unit-weight case.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
from scipy.special import expit, log_expit

from .errors import DomainError, NumericError
from .pairs import PreferencePair
from .policy import PolicyParams

LossKind = Literal["dpo", "wdpo"]


@dataclass(frozen=True)
class LossConfig:
    beta1: float = 0.1
    beta2: float = 1.0
    kind: LossKind = "wdpo"

    def __post_init__(self):
        if not self.beta1 > 0:
            raise DomainError(f"beta1 must be > 0, got {self.beta1}")
        if not self.beta2 >= 0:
            raise DomainError(f"beta2 must be >= 0, got {self.beta2}")
        if self.kind not in ("dpo", "wdpo"):
            raise DomainError(f"loss kind must be 'dpo' or 'wdpo', got {self.kind!r}")


def _columns(batch: Sequence[PreferencePair]):
    if len(batch) == 0:
        raise DomainError("pair batch is empty")
    x = np.fromiter((p.prompt for p in batch), dtype=np.int64, count=len(batch))
    w = np.fromiter((p.chosen for p in batch), dtype=np.int64, count=len(batch))
    l = np.fromiter((p.rejected for p in batch), dtype=np.int64, count=len(batch))
    return x, w, l


def _margins(policy: PolicyParams, reference: PolicyParams, x, w, l, beta1: float) -> np.ndarray:
    if policy.logits.shape != reference.logits.shape:
        raise DomainError("policy and reference shapes differ")
    lp = policy.log_probs()
    lr = reference.log_probs()
    ref_w, ref_l = lr[x, w], lr[x, l]
    if not (np.all(np.isfinite(ref_w)) and np.all(np.isfinite(ref_l))):
        raise NumericError("reference assigns zero probability to a paired response")
    return beta1 * ((lp[x, w] - lp[x, l]) - (ref_w - ref_l))


def implicit_reward_margin(
    policy: PolicyParams, reference: PolicyParams, pair: PreferencePair, beta1: float
) -> float:
    x, w, l = _columns([pair])
    return float(_margins(policy, reference, x, w, l, beta1)[0])


def wdpo_weight(pair: PreferencePair, beta2: float) -> float:
    if not pair.has_rewards:
        raise DomainError(f"pair for prompt {pair.prompt} carries no rewards")
    return float(expit(beta2 * (pair.reward_chosen - pair.reward_rejected)))


def pair_weights(batch: Sequence[PreferencePair], config: LossConfig) -> np.ndarray:
    if config.kind == "dpo":
        return np.ones(len(batch))
    return np.array([wdpo_weight(p, config.beta2) for p in batch])


def _weighted_loss(policy, reference, batch, beta1, weights) -> float:
    x, w, l = _columns(batch)
    m = _margins(policy, reference, x, w, l, beta1)
    return float(np.mean(-weights * log_expit(m)))


def dpo_loss(
    policy: PolicyParams, reference: PolicyParams, batch: Sequence[PreferencePair], beta1: float
) -> float:
    return _weighted_loss(policy, reference, batch, beta1, np.ones(len(batch)))


def wdpo_loss(
    policy: PolicyParams,
    reference: PolicyParams,
    batch: Sequence[PreferencePair],
    config: LossConfig,
) -> float:
    weights = pair_weights(batch, LossConfig(config.beta1, config.beta2, "wdpo"))
    return _weighted_loss(policy, reference, batch, config.beta1, weights)


def loss_value(policy, reference, batch, config: LossConfig) -> float:
    """Whichever loss ``config.kind`` selects."""
    return _weighted_loss(policy, reference, batch, config.beta1, pair_weights(batch, config))


def loss_gradient(
    policy: PolicyParams,
    reference: PolicyParams,
    batch: Sequence[PreferencePair],
    config: LossConfig,
) -> np.ndarray:
    """Gradient of the selected loss with respect to the policy logits.

    log pi(y_w|x) - log pi(y_l|x) reduces to z_w - z_l under a row softmax,
    so each pair touches exactly two logits.  Degenerate pairs are masked to
    an exact zero contribution.
    """
    weights = pair_weights(batch, config)
    x, w, l = _columns(batch)
    m = _margins(policy, reference, x, w, l, config.beta1)
    coeff = -weights * expit(-m) * config.beta1 / len(batch)
    coeff[w == l] = 0.0
    grad = np.zeros_like(policy.logits)
    np.add.at(grad, (x, w), coeff)
    np.add.at(grad, (x, l), -coeff)
    return grad


def apply_step(policy: PolicyParams, gradient, lr: float) -> PolicyParams:
    """Plain gradient descent: logits - lr * gradient."""
    gradient = np.asarray(gradient, dtype=float)
    if gradient.shape != policy.logits.shape:
        raise DomainError(f"gradient shape {gradient.shape} != logits shape {policy.logits.shape}")
    if lr < 0:
        raise DomainError(f"lr must be >= 0, got {lr}")
    updated = policy.logits - lr * gradient
    if not np.all(np.isfinite(updated)):
        raise NumericError("policy update produced non-finite logits")
    return PolicyParams(updated, policy.space)


class RMSProp:
    """Adaptive per-logit step scaling (RMSProp); opt-in alternative to plain GD."""

    def __init__(self, decay: float = 0.99, eps: float = 1e-8):
        self.decay = decay
        self.eps = eps
        self.mean_square = None

    def step(self, policy: PolicyParams, gradient, lr: float) -> PolicyParams:
        gradient = np.asarray(gradient, dtype=float)
        if self.mean_square is None:
            self.mean_square = np.zeros_like(gradient)
        self.mean_square = self.decay * self.mean_square + (1 - self.decay) * gradient**2
        return apply_step(policy, gradient / (np.sqrt(self.mean_square) + self.eps), lr)
