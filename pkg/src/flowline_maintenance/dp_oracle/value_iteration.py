import logging
from dataclasses import dataclass, field

import networkx as nx
import numpy as np
import pandas as pd

from flowline_maintenance.errors import ConfigError, ContractViolation, ConvergenceError
from flowline_maintenance.dp_oracle.tabular_mdp import HorizonMode, TabularMdp
from flowline_maintenance.flowline_sim.line_config import LineConfig
from flowline_maintenance.flowline_sim.simulator import state_from_key
from flowline_maintenance.mdp_env.environment import encode_observation
from flowline_maintenance.neural_core.q_network import QNetwork, forward

logger = logging.getLogger(__name__)

MAX_ITERATIONS = 100_000


@dataclass
class ValueIterationResult:
    q_table: np.ndarray  # [S, A]
    policy: np.ndarray  # greedy action per state, lowest index on ties
    iterations: int
    residuals: list[float] = field(default_factory=list)

    @property
    def values(self) -> np.ndarray:
        return self.q_table.max(axis=1) if self.q_table.size else np.zeros(0)


def bellman_backup(mdp: TabularMdp, q: np.ndarray) -> np.ndarray:
    """One synchronous Bellman optimality update of the whole Q table."""
    v = np.append(q.max(axis=1) if q.size else np.zeros(0), 0.0)
    target = mdp.prob * (mdp.reward + mdp.discount * v[mdp.next_state])
    total = np.bincount(mdp.sa_index, weights=target, minlength=mdp.num_states * mdp.num_actions)
    return total.reshape(mdp.num_states, mdp.num_actions)


def value_iteration(mdp: TabularMdp, tol: float = 1e-10, max_iterations: int = MAX_ITERATIONS) -> ValueIterationResult:
    """
    Iterate Bellman optimality updates until the sup-norm change is below tol.

    Raises:
        ConfigError: gamma >= 1 on a discounted (infinite horizon) model.
        ConvergenceError: tolerance not reached within max_iterations.
    """
    if mdp.gamma >= 1.0 and mdp.horizon_mode is HorizonMode.DISCOUNTED:
        raise ConfigError("value iteration needs gamma < 1 unless the horizon is finite", key="gamma")
    if tol <= 0:
        raise ConfigError(f"invalid value for 'tol': must be > 0, got {tol}", key="tol")

    q = np.zeros((mdp.num_states, mdp.num_actions))
    residuals = []
    for iteration in range(1, max_iterations + 1):
        q_new = bellman_backup(mdp, q)
        residual = float(np.max(np.abs(q_new - q))) if q.size else 0.0
        residuals.append(residual)
        q = q_new
        if residual < tol:
            logger.info("[Oracle] value iteration converged after %d sweeps (residual %.3g)", iteration, residual)
            return ValueIterationResult(q_table=q, policy=np.argmax(q, axis=1), iterations=iteration, residuals=residuals)
    raise ConvergenceError(f"value iteration did not reach tol={tol} within {max_iterations} sweeps (last change {residuals[-1]:.3g})")


def reachable_states(mdp: TabularMdp, policy: np.ndarray | None = None) -> list[int]:
    """
    States reachable from the initial distribution.

    Args:
        policy: follow only this action per state; None follows every action.
    """
    graph = nx.DiGraph()
    graph.add_nodes_from(range(mdp.num_states))
    s, a = np.divmod(mdp.sa_index, mdp.num_actions)
    keep = (mdp.prob > 0) & (mdp.next_state < mdp.terminal)
    if policy is not None:
        keep &= a == np.asarray(policy)[s]
    graph.add_edges_from(zip(s[keep].tolist(), mdp.next_state[keep].tolist()))

    starts = [k for k in np.flatnonzero(mdp.initial[: mdp.num_states] > 0)]
    reached = set(int(k) for k in starts)
    for k in starts:
        reached |= nx.descendants(graph, int(k))
    return sorted(reached)


def greedy_actions(net: QNetwork, mdp: TabularMdp, line_cfg: LineConfig, states: list[int]) -> np.ndarray:
    if not states:
        return np.zeros(0, dtype=np.int64)
    obs = np.stack([encode_observation(state_from_key(mdp.states[s]), line_cfg) for s in states])
    return np.argmax(forward(net, obs), axis=1)


def compare_policies(
    oracle: ValueIterationResult,
    learned: QNetwork | np.ndarray,
    mdp: TabularMdp,
    line_cfg: LineConfig,
    tol: float = 1e-9,
) -> float:
    """
    Fraction of reachable states where the learned greedy action is optimal.

    An action counts as agreeing when it equals the oracle action or its
    oracle Q-value ties the best one within tol.

    Args:
        learned: a Q-network, or one action per state index.
    """
    states = reachable_states(mdp)
    if not states:
        return 1.0
    if isinstance(learned, QNetwork):
        actions = greedy_actions(learned, mdp, line_cfg, states)
    else:
        learned = np.asarray(learned)
        if learned.shape != (mdp.num_states,):
            raise ContractViolation(f"expected one action per state ({mdp.num_states}), got shape {learned.shape}")
        actions = learned[states]

    q = oracle.q_table[states]
    chosen = q[np.arange(len(states)), actions]
    agree = (actions == oracle.policy[states]) | (chosen >= q.max(axis=1) - tol)
    return float(np.mean(agree))


def q_table_frame(result: ValueIterationResult) -> pd.DataFrame:
    num_states, num_actions = result.q_table.shape
    return pd.DataFrame(
        {
            "state_id": np.repeat(np.arange(num_states), num_actions),
            "action": np.tile(np.arange(num_actions), num_states),
            "q": result.q_table.ravel(),
        }
    )


def policy_frame(mdp: TabularMdp, result: ValueIterationResult, line_cfg: LineConfig) -> pd.DataFrame:
    """Optimal action per state next to the state's clock, conditions and buffer levels."""
    i = line_cfg.num_machines
    rows = []
    for s, key in enumerate(mdp.states):
        state = state_from_key(key)
        rows.append(
            [s, key[3] if key[3] is not None else "", *state.conditions(), *state.buffer_levels, int(result.policy[s]), result.values[s]]
        )
    columns = (
        ["state_id", "clock"]
        + [f"cs_{k}" for k in range(1, i + 1)]
        + [f"level_{k}" for k in range(1, i + 1)]
        + ["action", "value"]
    )
    return pd.DataFrame(rows, columns=columns)
