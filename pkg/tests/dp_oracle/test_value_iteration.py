"""
Unit tests for value iteration, reachability and policy comparison.
"""

import numpy as np
import pytest

from flowline_maintenance.dp_oracle.tabular_mdp import HorizonMode, TabularMdp, enumerate_mdp
from flowline_maintenance.dp_oracle.value_iteration import (
    bellman_backup,
    compare_policies,
    policy_frame,
    q_table_frame,
    reachable_states,
    value_iteration,
)
from flowline_maintenance.errors import ConfigError, ContractViolation, ConvergenceError
from flowline_maintenance.flowline_sim.line_config import LineConfig, MachineConfig
from flowline_maintenance.flowline_sim.simulator import state_from_key
from flowline_maintenance.mdp_env.rewards import RewardConfig
from flowline_maintenance.neural_core.q_network import init_params


@pytest.fixture(scope="module")
def toy_line():
    return LineConfig(machines=(MachineConfig(p=1, d=0.3, b=1),), n=3, t_cbm=5, t_cm=20, t_sim=100, seed=7)


@pytest.fixture(scope="module")
def toy_mdp(toy_line):
    return enumerate_mdp(toy_line, RewardConfig(), gamma=0.9)


@pytest.fixture(scope="module")
def toy_result(toy_mdp):
    return value_iteration(toy_mdp)


def _two_state_chain(gamma):
    # state 0 pays 1 and moves to 1, state 1 pays nothing and moves back
    P = np.array([[[0.0, 1.0]], [[1.0, 0.0]]])
    R = np.array([[1.0], [0.0]])
    return TabularMdp.from_dense(P, R, gamma)


def test_two_state_chain_closed_form():
    result = value_iteration(_two_state_chain(0.9), tol=1e-12)
    assert result.values[0] == pytest.approx(1 / (1 - 0.81), rel=1e-9)
    assert result.values[1] == pytest.approx(0.9 / (1 - 0.81), rel=1e-9)


def test_zero_discount_gives_expected_reward(toy_line):
    mdp = enumerate_mdp(toy_line, RewardConfig(), gamma=0.0)
    result = value_iteration(mdp)
    assert np.allclose(result.q_table, mdp.expected_reward())
    assert result.iterations <= 2


def test_toy_optimal_policy_maintains_before_breakdown(toy_mdp, toy_result):
    """
    Idle in the first condition, preventive maintenance in the second, and
    corrective maintenance once broken.
    """
    by_condition = {state_from_key(key).conditions()[0]: int(toy_result.policy[s]) for s, key in enumerate(toy_mdp.states)}
    assert by_condition == {1: 0, 2: 1, 3: 1}
    assert np.all(toy_result.values < 0)


def test_residuals_contract(toy_mdp, toy_result):
    residuals = toy_result.residuals
    assert residuals[-1] < 1e-10
    for before, after in zip(residuals[5:], residuals[6:]):
        if before > 1e-12:
            assert after <= 0.9 * before + 1e-12


def test_fixed_point_of_bellman_backup(toy_mdp, toy_result):
    assert np.allclose(bellman_backup(toy_mdp, toy_result.q_table), toy_result.q_table, atol=1e-9)


def test_episodic_horizon_converges_without_discount(toy_line):
    line = toy_line.with_overrides(t_sim=30)
    mdp = enumerate_mdp(line, RewardConfig(), horizon_mode=HorizonMode.EPISODIC, gamma=1.0)
    result = value_iteration(mdp)
    assert mdp.num_states > 3
    assert np.all(np.isfinite(result.values))
    assert result.iterations <= 31


def test_discounted_mode_rejects_unit_gamma(toy_line):
    with pytest.raises(ConfigError, match="gamma"):
        value_iteration(enumerate_mdp(toy_line, RewardConfig(), gamma=1.0))
    with pytest.raises(ConfigError):
        value_iteration(_two_state_chain(0.5), tol=0.0)


def test_iteration_cap_raises(toy_mdp):
    with pytest.raises(ConvergenceError):
        value_iteration(toy_mdp, max_iterations=2)


def test_reachability_from_initial_distribution(toy_mdp, toy_result):
    assert reachable_states(toy_mdp) == list(range(toy_mdp.num_states))
    assert set(reachable_states(toy_mdp, toy_result.policy)) <= set(range(toy_mdp.num_states))
    chain = _two_state_chain(0.5)
    assert reachable_states(chain) == [0, 1]


def test_oracle_agrees_with_itself(toy_mdp, toy_line, toy_result):
    assert compare_policies(toy_result, toy_result.policy, toy_mdp, toy_line) == 1.0
    flipped = 1 - toy_result.policy
    assert compare_policies(toy_result, flipped, toy_mdp, toy_line) == 0.0


def test_compare_accepts_networks(toy_mdp, toy_line, toy_result):
    scores = [compare_policies(toy_result, init_params([2, 8, 2], seed), toy_mdp, toy_line) for seed in range(20)]
    assert all(0.0 <= score <= 1.0 for score in scores)
    assert len(set(scores)) > 1


def test_compare_rejects_wrong_shape(toy_mdp, toy_line, toy_result):
    with pytest.raises(ContractViolation):
        compare_policies(toy_result, np.zeros(toy_mdp.num_states + 1, dtype=int), toy_mdp, toy_line)


def test_frames(toy_mdp, toy_line, toy_result):
    q = q_table_frame(toy_result)
    assert list(q.columns) == ["state_id", "action", "q"]
    assert len(q) == toy_mdp.num_states * 2
    policy = policy_frame(toy_mdp, toy_result, toy_line)
    assert list(policy.columns) == ["state_id", "clock", "cs_1", "level_1", "action", "value"]
    assert sorted(policy["cs_1"]) == [1, 2, 3]
