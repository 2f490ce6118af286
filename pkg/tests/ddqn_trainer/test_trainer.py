"""
Unit tests for the DDQN trainer: targets, exploration and the training loop.
"""

import dataclasses
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
import torch

from flowline_maintenance.config import load_config
from flowline_maintenance.ddqn_trainer.trainer import (
    DIAGNOSTIC_COLUMNS,
    LOG_COLUMNS,
    DecayGranularity,
    DiscountMode,
    TrainingConfig,
    ddqn_target,
    ddqn_targets,
    decay_epsilon,
    select_action,
    train,
    training_config_from_dict,
)
from flowline_maintenance.errors import ConfigError
from flowline_maintenance.flowline_sim.line_config import LineConfig, MachineConfig
from flowline_maintenance.mdp_env.rewards import RewardConfig, RewardMode
from flowline_maintenance.neural_core.q_network import DTYPE, QNetwork, clone_network, forward, init_params

CONFIGS = Path(__file__).resolve().parents[2] / "configs"


@pytest.fixture
def toy_line():
    return LineConfig(machines=(MachineConfig(p=1, d=0.3, b=1),), n=3, t_cbm=5, t_cm=20, t_sim=100, seed=7)


@pytest.fixture
def quick_training():
    return TrainingConfig.preset(
        RewardMode.R2,
        episodes=6,
        batch_size=8,
        gamma=0.9,
        lr=1e-3,
        target_sync_episodes=2,
        hidden_sizes=(8, 8),
        epsilon_decay_rate=1e-3,
        smoothing_window=3,
    )


def _identity_network(output_weight, output_bias):
    """Two-input network whose hidden layers pass non-negative inputs through unchanged."""
    net = QNetwork([2, 2, 2, 3])
    with torch.no_grad():
        for layer in net.linears[:2]:
            layer.weight.copy_(torch.eye(2, dtype=DTYPE))
            layer.bias.zero_()
        net.linears[2].weight.copy_(torch.tensor(output_weight, dtype=DTYPE))
        net.linears[2].bias.copy_(torch.tensor(output_bias, dtype=DTYPE))
    return net


def test_terminal_target_is_the_reward():
    net = init_params([2, 4, 4, 3], 0)
    assert ddqn_target(1.25, np.array([0.3, 0.6]), net, clone_network(net), 0.9, True) == 1.25


def test_equal_networks_reduce_to_max_target():
    """
    With theta = theta' the target is r + gamma * max_a Q(s', a).
    """
    net = init_params([2, 4, 4, 3], 1)
    s_next = np.array([0.3, 0.6])
    expected = 0.5 + 0.9 * forward(net, s_next).max()
    assert ddqn_target(0.5, s_next, net, net, 0.9, False) == pytest.approx(expected, abs=1e-12)


def test_online_network_selects_and_target_network_evaluates():
    """
    The online net prefers action 0 while the target net values action 1
    most; the target uses the target net's value of action 0.
    """
    online = _identity_network([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]], [0.0, 0.0, 0.0])
    target = _identity_network([[0.0, 0.0], [2.0, 0.0], [0.0, 0.0]], [0.1, 0.0, 0.7])
    s_next = np.array([0.5, 0.25])
    assert forward(online, s_next).argmax() == 0
    assert forward(target, s_next).argmax() == 1
    assert ddqn_target(1.0, s_next, online, target, 0.9, False) == pytest.approx(1.0 + 0.9 * 0.1, abs=1e-12)


def test_batched_targets_cut_terminals_and_use_per_row_discounts():
    net = init_params([2, 4, 4, 3], 2)
    next_obs = torch.tensor([[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]], dtype=DTYPE)
    rewards = torch.tensor([1.0, 2.0, 3.0], dtype=DTYPE)
    terminals = torch.tensor([False, True, False])
    discounts = torch.tensor([0.9, 0.9, 0.81], dtype=DTYPE)
    out = ddqn_targets(rewards, next_obs, terminals, discounts, net, net)
    q_max = forward(net, next_obs.numpy()).max(axis=1)
    assert out[0].item() == pytest.approx(1.0 + 0.9 * q_max[0], abs=1e-12)
    assert out[1].item() == 2.0
    assert out[2].item() == pytest.approx(3.0 + 0.81 * q_max[2], abs=1e-12)


def test_epsilon_decay_is_floored():
    assert decay_epsilon(1.0, 0.1, 0.05) == pytest.approx(0.9)
    assert decay_epsilon(0.05, 0.1, 0.05) == 0.05


def test_greedy_selection_breaks_ties_by_lowest_index():
    rng = np.random.default_rng(0)
    assert select_action(np.array([0.2, 0.7, 0.7]), 0.0, rng) == 1


def test_full_exploration_covers_the_action_space():
    rng = np.random.default_rng(0)
    actions = {select_action(np.zeros(4), 1.0, rng) for _ in range(500)}
    assert actions == {0, 1, 2, 3}


def test_full_exploration_draws_actions_uniformly():
    """
    With epsilon = 1 the greedy values are ignored: over 1e5 draws on a
    six-action line each action comes up 1/6 of the time.
    """
    rng = np.random.default_rng(123)
    q_values = np.array([5.0, 0.0, 0.0, 0.0, 0.0, 0.0])
    draws = [select_action(q_values, 1.0, rng) for _ in range(100_000)]
    frequencies = np.bincount(draws, minlength=6) / len(draws)
    assert frequencies == pytest.approx(np.full(6, 1 / 6), abs=0.005)


def test_presets_per_reward_mode():
    r1 = TrainingConfig.preset(RewardMode.R1)
    r2 = TrainingConfig.preset("R2")
    assert (r1.hidden_sizes, r1.batch_size, r1.gamma, r1.target_sync_episodes) == ((17, 11), 151, 0.870, 200)
    assert (r2.hidden_sizes, r2.batch_size, r2.gamma, r2.target_sync_episodes) == ((14, 18), 137, 0.993, 98)
    assert r1.lr == 5.4e-4 and r2.lr == 3.6e-4
    assert r1.epsilon_decay_rate == 4.8e-5 and r2.epsilon_decay_rate == 2.9e-5
    assert r2.decay_granularity is DecayGranularity.PER_STEP
    assert r2.discount_mode is DiscountMode.PER_DECISION


def test_config_section_overrides_preset():
    cfg = training_config_from_dict({"episodes": 10, "hidden_sizes": [4, 5], "discount_mode": "per_step"}, "R1")
    assert cfg.episodes == 10
    assert cfg.hidden_sizes == (4, 5)
    assert cfg.discount_mode is DiscountMode.PER_STEP
    assert cfg.batch_size == 151


@pytest.mark.parametrize(
    "raw",
    [{"gamma": 1.5}, {"lr": 0}, {"batch_size": 0}, {"epsilon_min": 0}, {"hidden_sizes": [4]}, {"discount_mode": "x"}, {"bogus": 1}],
)
def test_invalid_training_values_rejected(raw):
    with pytest.raises(ConfigError):
        training_config_from_dict(raw, "R2")


def test_training_smoke_run_logs_every_episode(toy_line, quick_training):
    result = train(toy_line, RewardConfig(), quick_training, seed=3)
    frame = result.log.to_frame()
    assert list(frame.columns) == LOG_COLUMNS + ["loss", "lr"]
    assert frame["episode"].tolist() == list(range(6))
    assert frame["epsilon"].is_monotonic_decreasing
    assert frame["epsilon"].iloc[-1] < 1.0
    assert (frame["decisions"] > 0).all()
    assert 0 <= result.best_episode < 6
    assert result.final_network.layer_sizes == [2, 8, 8, 2]

    rewards = frame["reward"].tolist()
    for k, smoothed in enumerate(frame["smoothed_reward"]):
        assert smoothed == pytest.approx(np.mean(rewards[max(0, k - 2) : k + 1]))


def test_log_and_diagnostics_csv_columns(toy_line, quick_training, tmp_path):
    log = train(toy_line, RewardConfig(), quick_training, seed=3).log
    log.to_csv(tmp_path / "log.csv")
    log.to_diagnostics_csv(tmp_path / "diag.csv")
    assert pd.read_csv(tmp_path / "log.csv").columns.tolist() == LOG_COLUMNS
    diagnostics = pd.read_csv(tmp_path / "diag.csv")
    assert diagnostics.columns.tolist() == DIAGNOSTIC_COLUMNS
    assert diagnostics["episode"].tolist() == list(range(6))


def test_best_network_is_the_one_at_best_smoothed_reward(toy_line, quick_training):
    """
    The best network is kept from the episode with the highest smoothed
    reward over a full window, not the last one.
    """
    result = train(toy_line, RewardConfig(), quick_training, seed=3)
    smoothed = result.log.to_frame()["smoothed_reward"].to_numpy()
    window = quick_training.smoothing_window
    assert result.best_episode >= window - 1
    assert result.best_episode == window - 1 + int(smoothed[window - 1 :].argmax())
    assert result.best_smoothed_reward == smoothed[result.best_episode]


@pytest.mark.parametrize("seed", [0, 3, 5, 9])
def test_partial_windows_never_select_the_best_network(toy_line, quick_training, seed):
    """
    A lucky first episode has a one-episode average; it must not win over
    the full-window averages that follow.
    """
    result = train(toy_line, RewardConfig(), quick_training, seed=seed)
    assert result.best_episode >= quick_training.smoothing_window - 1


def test_run_shorter_than_window_keeps_the_final_network(toy_line, quick_training):
    cfg = dataclasses.replace(quick_training, episodes=2)
    result = train(toy_line, RewardConfig(), cfg, seed=3)
    assert result.best_episode == 1
    assert result.best_smoothed_reward == result.log.rows[-1]["smoothed_reward"]
    for name, tensor in result.final_network.state_dict().items():
        assert torch.equal(result.best_network.state_dict()[name], tensor)
    assert result.best_network is not result.final_network


def test_training_is_reproducible_from_seed(toy_line, quick_training):
    a = train(toy_line, RewardConfig(), quick_training, seed=11).log.to_frame()
    b = train(toy_line, RewardConfig(), quick_training, seed=11).log.to_frame()
    pd.testing.assert_frame_equal(a, b)


def test_per_episode_decay_and_step_discount(toy_line, quick_training):
    cfg = dataclasses.replace(
        quick_training,
        decay_granularity=DecayGranularity.PER_EPISODE,
        discount_mode=DiscountMode.PER_STEP,
        lr_decay=0.5,
        grad_clip_norm=1.0,
    )
    frame = train(toy_line, RewardConfig(), cfg, seed=0).log.to_frame()
    assert frame["epsilon"].tolist() == pytest.approx([(1 - 1e-3) ** (k + 1) for k in range(6)])
    assert frame["lr"].tolist() == pytest.approx([1e-3 * 0.5**k for k in range(6)])


@pytest.mark.slow
def test_thousand_episode_run_doubles_its_smoothed_reward():
    """
    R1 on the synchronous reference line: the best full-window smoothed
    reward is at least twice the mean of the first 100 episodes.
    """
    cfg = load_config(CONFIGS / "config2.json").with_overrides(episodes=1000, reward_mode="R1")
    result = train(cfg.line, cfg.reward, cfg.training, seed=cfg.line.seed)
    first_hundred = result.log.to_frame()["reward"].iloc[:100].mean()
    assert first_hundred > 0
    assert result.best_smoothed_reward >= 2 * first_hundred
