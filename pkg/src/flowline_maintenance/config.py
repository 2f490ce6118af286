"""
Run configuration: one JSON document with the line, the reward and the
optional `training`, `oracle` and `evaluation` sections.
"""

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

from flowline_maintenance.ddqn_trainer.trainer import TrainingConfig, training_config_from_dict
from flowline_maintenance.dp_oracle.tabular_mdp import DEFAULT_STATE_CAP, HorizonMode, OracleDiscount
from flowline_maintenance.errors import ConfigError
from flowline_maintenance.flowline_sim.line_config import LINE_KEYS, LineConfig, line_config_from_dict
from flowline_maintenance.mdp_env.rewards import REWARD_KEYS, RewardConfig, RewardMode, reward_config_from_dict

SECTIONS = ("training", "oracle", "evaluation")


@dataclass(frozen=True)
class OracleConfig:
    gamma: float = 0.9
    tol: float = 1e-10
    state_cap: int = DEFAULT_STATE_CAP
    horizon_mode: HorizonMode = HorizonMode.DISCOUNTED
    discount_mode: OracleDiscount = OracleDiscount.PER_STEP

    def __post_init__(self):
        if not 0 <= self.gamma <= 1:
            raise ConfigError(f"invalid value for 'gamma': must lie in [0, 1], got {self.gamma}", key="gamma")
        if self.tol <= 0:
            raise ConfigError(f"invalid value for 'tol': must be > 0, got {self.tol}", key="tol")
        if self.state_cap < 1:
            raise ConfigError("invalid value for 'state_cap': must be >= 1", key="state_cap")
        for key, enum in (("horizon_mode", HorizonMode), ("discount_mode", OracleDiscount)):
            try:
                object.__setattr__(self, key, enum(getattr(self, key)))
            except ValueError as exc:
                raise ConfigError(f"invalid value for '{key}': {getattr(self, key)!r}", key=key) from exc


@dataclass(frozen=True)
class EvaluationConfig:
    episodes: int = 100
    # evaluation seeds start this far above the run seed, clear of training seeds
    base_seed_offset: int = 1_000_000

    def __post_init__(self):
        if self.episodes < 0:
            raise ConfigError("invalid value for 'episodes': must be >= 0", key="episodes")
        if self.base_seed_offset < 0:
            raise ConfigError("invalid value for 'base_seed_offset': must be >= 0", key="base_seed_offset")


@dataclass(frozen=True)
class ExperimentConfig:
    line: LineConfig
    reward: RewardConfig
    training: TrainingConfig
    oracle: OracleConfig = field(default_factory=OracleConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    source: str | None = None
    # the `training` section as written, re-applied over a new preset when the reward mode changes
    training_raw: Mapping[str, Any] = field(default_factory=dict, compare=False, repr=False)

    @property
    def eval_base_seed(self) -> int:
        return self.line.seed + self.evaluation.base_seed_offset

    def with_overrides(
        self,
        seed: int | None = None,
        episodes: int | None = None,
        eval_episodes: int | None = None,
        reward_mode: str | None = None,
    ) -> "ExperimentConfig":
        """Apply command-line overrides; None leaves a value unchanged."""
        cfg = self
        if seed is not None:
            cfg = replace(cfg, line=cfg.line.with_overrides(seed=seed))
        if reward_mode is not None:
            mode = RewardMode(reward_mode)
            if mode is not cfg.reward.mode:
                training = training_config_from_dict(cfg.training_raw, mode)
                cfg = replace(cfg, reward=replace(cfg.reward, mode=mode), training=training)
        if episodes is not None:
            cfg = replace(cfg, training=replace(cfg.training, episodes=episodes))
        if eval_episodes is not None:
            cfg = replace(cfg, evaluation=replace(cfg.evaluation, episodes=eval_episodes))
        return cfg

    def to_dict(self) -> dict:
        out = {**self.line.to_dict(), **self.reward.to_dict()}
        out["training"] = self.training.to_dict()
        out["oracle"] = {
            "gamma": self.oracle.gamma,
            "tol": self.oracle.tol,
            "state_cap": self.oracle.state_cap,
            "horizon_mode": self.oracle.horizon_mode.value,
            "discount_mode": self.oracle.discount_mode.value,
        }
        out["evaluation"] = {"episodes": self.evaluation.episodes, "base_seed_offset": self.evaluation.base_seed_offset}
        return out


def _section(raw: Mapping[str, Any], name: str, cls) -> dict:
    section = raw.get(name, {})
    if not isinstance(section, Mapping):
        raise ConfigError(f"invalid value for '{name}': expected an object", key=name)
    if cls is not None:
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(section) - known)
        if unknown:
            raise ConfigError(f"unknown key in '{name}': {unknown[0]}", key=unknown[0])
    return dict(section)


def config_from_dict(raw: Mapping[str, Any], name: str = "line") -> ExperimentConfig:
    unknown = sorted(set(raw) - set(LINE_KEYS) - set(REWARD_KEYS) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"unknown key: {unknown[0]}", key=unknown[0])

    line = line_config_from_dict(raw, name=name)
    reward = reward_config_from_dict(raw)
    try:
        training_raw = _section(raw, "training", None)
        training = training_config_from_dict(training_raw, reward.mode)
        oracle = OracleConfig(**_section(raw, "oracle", OracleConfig))
        evaluation = EvaluationConfig(**_section(raw, "evaluation", EvaluationConfig))
    except TypeError as exc:
        raise ConfigError(f"invalid configuration section: {exc}") from exc
    return ExperimentConfig(
        line=line, reward=reward, training=training, oracle=oracle, evaluation=evaluation, training_raw=training_raw
    )


def load_config(path: str | Path) -> ExperimentConfig:
    """
    Read and validate a JSON run configuration. The file is only read.

    Raises:
        ConfigError: unreadable JSON, a missing required key or a bad value.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, Mapping):
        raise ConfigError(f"{path} must hold a JSON object")
    cfg = config_from_dict(raw, name=path.stem)
    return replace(cfg, source=str(path))
