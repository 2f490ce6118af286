"""
DDQN training loop: epsilon-greedy exploration, replay memory, target network
synchronised every `target_sync_episodes`, and best-policy retention on the
reward smoothed over the last `smoothing_window` episodes.
"""

import logging
import math
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from typing import Any, Mapping

import numpy as np
import pandas as pd
import torch
from tqdm import tqdm

from flowline_maintenance.ddqn_trainer.replay_buffer import ReplayBuffer
from flowline_maintenance.errors import ConfigError
from flowline_maintenance.flowline_sim.line_config import LineConfig
from flowline_maintenance.flowline_sim.simulator import MaintenanceKind
from flowline_maintenance.mdp_env.environment import FlowLineEnv
from flowline_maintenance.mdp_env.rewards import RewardConfig, RewardMode
from flowline_maintenance.neural_core.q_network import (
    DTYPE,
    QNetwork,
    adam_step,
    batch_gradients,
    clone_network,
    forward,
    init_params,
    make_optimizer,
    network_layer_sizes,
)

logger = logging.getLogger(__name__)

LOG_COLUMNS = [
    "episode",
    "reward",
    "produced_parts",
    "maintenance_cost",
    "decisions",
    "epsilon",
    "smoothed_reward",
]
# per-episode optimizer diagnostics, written to their own CSV
DIAGNOSTIC_COLUMNS = ["episode", "loss", "lr"]


class DecayGranularity(str, Enum):
    PER_EPISODE = "per_episode"
    PER_STEP = "per_step"


class DiscountMode(str, Enum):
    PER_DECISION = "per_decision"  # gamma per decision point
    PER_STEP = "per_step"  # gamma ** elapsed simulation steps


@dataclass(frozen=True)
class TrainingConfig:
    episodes: int = 3000
    batch_size: int = 137
    gamma: float = 0.993
    lr: float = 3.6e-4
    target_sync_episodes: int = 98
    epsilon_start: float = 1.0
    epsilon_min: float = 0.1
    epsilon_decay_rate: float = 2.9e-5
    decay_granularity: DecayGranularity = DecayGranularity.PER_STEP
    smoothing_window: int = 100
    hidden_sizes: tuple[int, ...] = (14, 18)
    replay_capacity: int = 100_000
    grad_clip_norm: float | None = None
    lr_decay: float | None = None
    discount_mode: DiscountMode = DiscountMode.PER_DECISION
    log_every: int = 50

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        try:
            object.__setattr__(self, "decay_granularity", DecayGranularity(self.decay_granularity))
        except ValueError as exc:
            raise ConfigError(f"invalid value for 'decay_granularity': {self.decay_granularity!r}", key="decay_granularity") from exc
        try:
            object.__setattr__(self, "discount_mode", DiscountMode(self.discount_mode))
        except ValueError as exc:
            raise ConfigError(f"invalid value for 'discount_mode': {self.discount_mode!r}", key="discount_mode") from exc

        if self.episodes < 0:
            raise ConfigError("invalid value for 'episodes': must be >= 0", key="episodes")
        for key in ("batch_size", "target_sync_episodes", "smoothing_window", "replay_capacity", "log_every"):
            if getattr(self, key) < 1:
                raise ConfigError(f"invalid value for '{key}': must be >= 1", key=key)
        if not 0 < self.gamma <= 1:
            raise ConfigError(f"invalid value for 'gamma': must lie in (0, 1], got {self.gamma}", key="gamma")
        if self.lr <= 0:
            raise ConfigError(f"invalid value for 'lr': must be > 0, got {self.lr}", key="lr")
        if not 0 < self.epsilon_min <= self.epsilon_start <= 1:
            raise ConfigError("invalid epsilon schedule: need 0 < epsilon_min <= epsilon_start <= 1", key="epsilon_min")
        if not 0 <= self.epsilon_decay_rate < 1:
            raise ConfigError("invalid value for 'epsilon_decay_rate': must lie in [0, 1)", key="epsilon_decay_rate")
        if len(self.hidden_sizes) != 2 or min(self.hidden_sizes) < 1:
            raise ConfigError("invalid value for 'hidden_sizes': expected two positive sizes", key="hidden_sizes")
        if self.lr_decay is not None and not 0 < self.lr_decay <= 1:
            raise ConfigError("invalid value for 'lr_decay': must lie in (0, 1]", key="lr_decay")

    @classmethod
    def preset(cls, mode: RewardMode | str, **overrides) -> "TrainingConfig":
        """Hyperparameters tuned per reward design; keyword overrides win."""
        values = dict(PRESETS[RewardMode(mode)])
        values.update(overrides)
        return cls(**values)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["decay_granularity"] = self.decay_granularity.value
        out["discount_mode"] = self.discount_mode.value
        out["hidden_sizes"] = list(self.hidden_sizes)
        return out


PRESETS: dict[RewardMode, dict[str, Any]] = {
    RewardMode.R1: {
        "batch_size": 151,
        "gamma": 0.870,
        "lr": 5.4e-4,
        "target_sync_episodes": 200,
        "epsilon_decay_rate": 4.8e-5,
        "hidden_sizes": (17, 11),
    },
    RewardMode.R2: {
        "batch_size": 137,
        "gamma": 0.993,
        "lr": 3.6e-4,
        "target_sync_episodes": 98,
        "epsilon_decay_rate": 2.9e-5,
        "hidden_sizes": (14, 18),
    },
}


def training_config_from_dict(raw: Mapping[str, Any], mode: RewardMode | str) -> TrainingConfig:
    known = {f.name for f in fields(TrainingConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown key in 'training': {unknown[0]}", key=unknown[0])
    return TrainingConfig.preset(mode, **raw)


@dataclass
class TrainingLog:
    rows: list[dict[str, Any]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    def append(self, **row) -> None:
        self.rows.append(row)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=LOG_COLUMNS + DIAGNOSTIC_COLUMNS[1:])

    def to_csv(self, path) -> None:
        self.to_frame()[LOG_COLUMNS].to_csv(path, index=False)

    def to_diagnostics_csv(self, path) -> None:
        self.to_frame()[DIAGNOSTIC_COLUMNS].to_csv(path, index=False)


@dataclass
class TrainingResult:
    best_network: QNetwork
    final_network: QNetwork
    log: TrainingLog
    best_episode: int | None
    # over full smoothing windows only; the final episode's value when none filled
    best_smoothed_reward: float = -math.inf


def decay_epsilon(epsilon: float, rate: float, epsilon_min: float) -> float:
    return max(epsilon_min, epsilon * (1.0 - rate))


def select_action(q_values: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """Uniform random action with probability epsilon, else argmax (lowest index on ties)."""
    if rng.random() < epsilon:
        return int(rng.integers(len(q_values)))
    return int(np.argmax(q_values))


def ddqn_targets(
    rewards: torch.Tensor,
    next_obs: torch.Tensor,
    terminals: torch.Tensor,
    discounts: torch.Tensor,
    online: QNetwork,
    target: QNetwork,
) -> torch.Tensor:
    """Batched r + discount * Q(s', argmax_a Q(s', a; theta); theta'), cut at terminals."""
    with torch.no_grad():
        best = online(next_obs).argmax(dim=1, keepdim=True)
        q_next = target(next_obs).gather(1, best).squeeze(1)
        return rewards + discounts * q_next * (~terminals).to(DTYPE)


def ddqn_target(
    r: float,
    next_obs: np.ndarray,
    theta: QNetwork,
    theta_prime: QNetwork,
    gamma: float,
    terminal: bool,
) -> float:
    """Target value of a single transition: selection by theta, evaluation by theta'."""
    if terminal:
        return float(r)
    value = ddqn_targets(
        torch.tensor([r], dtype=DTYPE),
        torch.as_tensor(np.asarray(next_obs, dtype=np.float64)[None, :], dtype=DTYPE),
        torch.tensor([False]),
        torch.tensor([gamma], dtype=DTYPE),
        theta,
        theta_prime,
    )
    return float(value.item())


def _update(
    online: QNetwork,
    target: QNetwork,
    optimizer: torch.optim.Adam,
    buffer: ReplayBuffer,
    cfg: TrainingConfig,
    rng: np.random.Generator,
) -> float:
    batch = buffer.sample(cfg.batch_size, rng)
    obs = torch.as_tensor(batch.obs, dtype=DTYPE)
    next_obs = torch.as_tensor(batch.next_obs, dtype=DTYPE)
    rewards = torch.as_tensor(batch.rewards, dtype=DTYPE)
    terminals = torch.as_tensor(batch.terminals)
    if cfg.discount_mode is DiscountMode.PER_STEP:
        discounts = torch.as_tensor(cfg.gamma ** batch.elapsed.astype(np.float64), dtype=DTYPE)
    else:
        discounts = torch.full_like(rewards, cfg.gamma)

    targets = ddqn_targets(rewards, next_obs, terminals, discounts, online, target)
    loss, grads = batch_gradients(online, obs, torch.as_tensor(batch.actions), targets)
    adam_step(online, grads, optimizer, cfg.grad_clip_norm)
    return loss


def train(
    line_cfg: LineConfig,
    reward_cfg: RewardConfig,
    train_cfg: TrainingConfig,
    seed: int | None = None,
    progress: bool = False,
) -> TrainingResult:
    """
    Train a DDQN maintenance scheduler.

    Episode k runs with simulator seed `seed + k`. After every decision step
    the transition is stored and, once the memory holds a batch, one Adam
    update is made. The returned best network is the one with the highest
    smoothed episode reward over a full smoothing window; when training is
    shorter than the window, it is the final network.

    Args:
        seed: base seed for weights, exploration, replay sampling and episodes;
            defaults to `line_cfg.seed`.
        progress: show a tqdm bar over episodes.
    """
    seed = line_cfg.seed if seed is None else seed
    rng = np.random.default_rng([seed, 1])
    env = FlowLineEnv(line_cfg, reward_cfg)

    online = init_params(
        network_layer_sizes(line_cfg.num_machines, train_cfg.hidden_sizes),
        torch.Generator().manual_seed(seed),
    )
    target = clone_network(online)
    optimizer = make_optimizer(online, train_cfg.lr)
    scheduler = (
        torch.optim.lr_scheduler.ExponentialLR(optimizer, gamma=train_cfg.lr_decay)
        if train_cfg.lr_decay is not None
        else None
    )
    buffer = ReplayBuffer(train_cfg.replay_capacity)

    log = TrainingLog()
    episode_rewards: list[float] = []
    epsilon = train_cfg.epsilon_start
    best_state = None
    best_smoothed = -math.inf
    best_episode = None

    for episode in tqdm(range(train_cfg.episodes), desc="[Train]", disable=not progress):
        obs = env.reset(seed=seed + episode)
        total_reward = 0.0
        cbm = cm = 0
        losses = []

        while not env.terminal:
            action = select_action(forward(online, obs), epsilon, rng)
            transition = env.step(action)
            buffer.push(transition)
            total_reward += transition.reward
            if transition.kind is MaintenanceKind.CBM:
                cbm += 1
            elif transition.kind is MaintenanceKind.CM:
                cm += 1

            if buffer.is_ready(train_cfg.batch_size):
                losses.append(_update(online, target, optimizer, buffer, train_cfg, rng))
            if train_cfg.decay_granularity is DecayGranularity.PER_STEP:
                epsilon = decay_epsilon(epsilon, train_cfg.epsilon_decay_rate, train_cfg.epsilon_min)
            obs = transition.next_obs

        if train_cfg.decay_granularity is DecayGranularity.PER_EPISODE:
            epsilon = decay_epsilon(epsilon, train_cfg.epsilon_decay_rate, train_cfg.epsilon_min)
        if (episode + 1) % train_cfg.target_sync_episodes == 0:
            target.load_state_dict(online.state_dict())
        lr = optimizer.param_groups[0]["lr"]
        if scheduler is not None:
            scheduler.step()

        episode_rewards.append(total_reward)
        smoothed = float(np.mean(episode_rewards[-train_cfg.smoothing_window :]))
        log.append(
            episode=episode,
            reward=total_reward,
            produced_parts=env.state.produced_parts,
            maintenance_cost=reward_cfg.maintenance_cost(cbm, cm),
            decisions=env.decisions,
            epsilon=epsilon,
            smoothed_reward=smoothed,
            loss=float(np.mean(losses)) if losses else math.nan,
            lr=lr,
        )

        window_full = episode + 1 >= train_cfg.smoothing_window
        if window_full and smoothed > best_smoothed:
            best_smoothed = smoothed
            best_episode = episode
            best_state = {k: v.clone() for k, v in online.state_dict().items()}
            logger.debug("[Train] new best smoothed reward %.3f at episode %d", smoothed, episode)

        if (episode + 1) % train_cfg.log_every == 0:
            logger.info(
                "[Train] Episode %d/%d | Avg Reward: %.2f | eps: %.3f | LR: %.6f | Best: %.2f (ep %s)",
                episode + 1,
                train_cfg.episodes,
                smoothed,
                epsilon,
                lr,
                best_smoothed,
                best_episode,
            )

    best = clone_network(online)
    if best_episode is None:
        # no full smoothing window: the final network stands in for the best one
        if log.rows:
            best_episode = len(log) - 1
            best_smoothed = log.rows[-1]["smoothed_reward"]
    else:
        best.load_state_dict(best_state)
    return TrainingResult(
        best_network=best,
        final_network=online,
        log=log,
        best_episode=best_episode,
        best_smoothed_reward=best_smoothed,
    )


