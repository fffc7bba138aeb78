"""Experiment configuration: a flat key-value schema stored as YAML.

Every key is optional except that unknown keys are rejected.  Defaults:

    num_prompts            64
    responses_per_prompt   32
    iterations             3      generation + training rounds (T)
    rho                    0.5    fraction of prompts regenerated, in (0, 1]
    strategy               optune optune | random | full
    loss_kind              wdpo   dpo | wdpo
    beta1                  0.1    implicit-reward scale
    beta2                  1.0    reward-gap scale of the wDPO weight
    temperature            1.0
    top_p                  0.9
    inner_steps            50     gradient steps per iteration
    lr                     140.0
    optimizer              sgd    sgd | rmsprop
    master_seed            0      drives sampling and selection
    scenario_seed          null   oracle + initial policy; null -> master_seed
    reward_source          oracle oracle | learned
    oracle_csv             null   load the oracle table instead of generating it
    reward_scale           1.0    spread of generated oracle rewards
    init_logit_scale       1.0    spread of the generated initial policy logits
    rm_pairs_per_prompt    16     oracle-labeled comparisons for the learned RM
    rm_steps               2000
    rm_lr                  50.0
    f_gen / f_reward / f_train   0.718 / 0.001 / 0.281   cost fractions
    workers                1      threads for prompt-parallel sampling
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping

import yaml

from .efficiency import CostModel
from .errors import DomainError
from .losses import LossConfig
from .policy import GenerationConfig, PromptSpace
from .scheduler import STRATEGIES, SelectionStrategy


class ConfigError(DomainError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    num_prompts: int = 64
    responses_per_prompt: int = 32
    iterations: int = 3
    rho: float = 0.5
    strategy: str = "optune"
    loss_kind: str = "wdpo"
    beta1: float = 0.1
    beta2: float = 1.0
    temperature: float = 1.0
    top_p: float = 0.9
    inner_steps: int = 50
    lr: float = 140.0
    optimizer: str = "sgd"
    master_seed: int = 0
    scenario_seed: int | None = None
    reward_source: str = "oracle"
    oracle_csv: str | None = None
    reward_scale: float = 1.0
    init_logit_scale: float = 1.0
    rm_pairs_per_prompt: int = 16
    rm_steps: int = 2000
    rm_lr: float = 50.0
    f_gen: float = 0.718
    f_reward: float = 0.001
    f_train: float = 0.281
    workers: int = 1

    def __post_init__(self):
        try:
            self.space, self.loss, self.generation, self.cost_model, self.selection
        except DomainError as exc:
            raise ConfigError(str(exc)) from None
        if not 0 < self.rho <= 1:
            raise ConfigError("rho must lie in (0, 1]")
        checks = [
            (self.iterations >= 1, "iterations must be >= 1"),
            (self.inner_steps >= 1, "inner_steps must be >= 1"),
            (self.lr > 0, "lr must be > 0"),
            (self.optimizer in ("sgd", "rmsprop"), "optimizer must be 'sgd' or 'rmsprop'"),
            (self.reward_source in ("oracle", "learned"), "reward_source must be 'oracle' or 'learned'"),
            (self.reward_scale > 0, "reward_scale must be > 0"),
            (self.init_logit_scale >= 0, "init_logit_scale must be >= 0"),
            (self.rm_pairs_per_prompt >= 1, "rm_pairs_per_prompt must be >= 1"),
            (self.rm_steps >= 0, "rm_steps must be >= 0"),
            (self.rm_lr > 0, "rm_lr must be > 0"),
            (self.workers >= 1, "workers must be >= 1"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

    @property
    def space(self) -> PromptSpace:
        return PromptSpace(self.num_prompts, self.responses_per_prompt)

    @property
    def loss(self) -> LossConfig:
        return LossConfig(self.beta1, self.beta2, self.loss_kind)

    @property
    def generation(self) -> GenerationConfig:
        return GenerationConfig(self.temperature, self.top_p)

    @property
    def cost_model(self) -> CostModel:
        return CostModel(self.f_gen, self.f_reward, self.f_train)

    @property
    def selection(self) -> SelectionStrategy:
        return SelectionStrategy(self.strategy)

    @property
    def resolved_scenario_seed(self) -> int:
        return self.master_seed if self.scenario_seed is None else self.scenario_seed

    def replace(self, **changes) -> ExperimentConfig:
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


_FIELD_TYPES = {
    "num_prompts": int, "responses_per_prompt": int, "iterations": int, "inner_steps": int,
    "master_seed": int, "scenario_seed": int, "rm_pairs_per_prompt": int, "rm_steps": int,
    "workers": int,
    "rho": float, "beta1": float, "beta2": float, "temperature": float, "top_p": float,
    "lr": float, "reward_scale": float, "init_logit_scale": float, "rm_lr": float,
    "f_gen": float, "f_reward": float, "f_train": float,
    "strategy": str, "loss_kind": str, "optimizer": str, "reward_source": str, "oracle_csv": str,
}
_NULLABLE = {"scenario_seed", "oracle_csv"}


def _coerce(key: str, value: Any) -> Any:
    kind = _FIELD_TYPES[key]
    if value is None:
        if key in _NULLABLE:
            return None
        raise ConfigError(f"{key} may not be null")
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number, got {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{key} must be a string, got {value!r}")
    return value


def config_from_mapping(data: Mapping[str, Any]) -> ExperimentConfig:
    unknown = sorted(set(data) - set(_FIELD_TYPES))
    if unknown:
        raise ConfigError(f"unknown config key: {unknown[0]}")
    if "strategy" in data and data["strategy"] not in STRATEGIES:
        raise ConfigError(f"strategy must be one of {STRATEGIES}")
    return ExperimentConfig(**{k: _coerce(k, v) for k, v in data.items()})


def parse_config(path) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid key-value text: {exc}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping of keys to values")
    return config_from_mapping(data)


def dump_config(config: ExperimentConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=False)
