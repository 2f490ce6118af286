"""
Exact enumeration of the decision-point MDP of a small flow line.

Transitions are built by running the simulator's own tick functions and
branching over every degradation outcome, so the tabular model and the
event simulator share one set of dynamics. A transition goes from one
decision point to the next (or to the end of the episode) and is stored as
an outcome row: (state-action index, next state, probability, reward,
discount factor). The elapsed time of each outcome is kept so the reward
and the discount can depend on it.
"""

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from itertools import product

import numpy as np

from flowline_maintenance.errors import ConfigError, ContractViolation, StateCapExceeded
from flowline_maintenance.flowline_sim.line_config import LineConfig
from flowline_maintenance.flowline_sim.simulator import (
    MaintenanceKind,
    SimState,
    StateKey,
    apply_degradation,
    complete_due_maintenance,
    init_line,
    is_decision_point,
    part_flow_tick,
    state_from_key,
    state_key,
)
from flowline_maintenance.mdp_env.environment import commit_action
from flowline_maintenance.mdp_env.rewards import RewardConfig, RewardMode, classify_scenario, reward_r2

logger = logging.getLogger(__name__)

DEFAULT_STATE_CAP = 100_000
ROW_SUM_TOL = 1e-12


class HorizonMode(str, Enum):
    DISCOUNTED = "discounted"  # stationary states, clock dropped
    EPISODIC = "episodic"  # clock kept in the state, episode ends at t_sim


class OracleDiscount(str, Enum):
    PER_DECISION = "per_decision"
    PER_STEP = "per_step"


@dataclass
class TabularMdp:
    """
    Finite MDP in outcome-row form.

    `next_state` equal to `num_states` denotes the absorbing end of the
    episode, whose value is 0.
    """

    states: list[StateKey]
    num_actions: int
    sa_index: np.ndarray
    next_state: np.ndarray
    prob: np.ndarray
    reward: np.ndarray
    discount: np.ndarray
    elapsed: np.ndarray
    initial: np.ndarray  # length num_states + 1
    gamma: float
    horizon_mode: HorizonMode = HorizonMode.DISCOUNTED
    index: dict[StateKey, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.index:
            self.index = {key: k for k, key in enumerate(self.states)}
        if not np.all(np.isfinite(self.reward)):
            raise ContractViolation("rewards must be finite")
        sums = self.row_sums()
        bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)
        if bad.size:
            s, a = divmod(int(bad[0]), self.num_actions)
            raise ContractViolation(f"P(.|s={s}, a={a}) sums to {sums[bad[0]]!r}, expected 1")

    @property
    def num_states(self) -> int:
        return len(self.states)

    @property
    def terminal(self) -> int:
        return self.num_states

    def row_sums(self) -> np.ndarray:
        return np.bincount(self.sa_index, weights=self.prob, minlength=self.num_states * self.num_actions)

    def transition_matrix(self) -> np.ndarray:
        """Dense P[s, a, s'] with a last column for the end of the episode."""
        P = np.zeros((self.num_states, self.num_actions, self.num_states + 1))
        s, a = np.divmod(self.sa_index, self.num_actions)
        np.add.at(P, (s, a, self.next_state), self.prob)
        return P

    def expected_reward(self) -> np.ndarray:
        """R[s, a] = E[r | s, a]."""
        total = np.bincount(self.sa_index, weights=self.prob * self.reward, minlength=self.num_states * self.num_actions)
        return total.reshape(self.num_states, self.num_actions)

    def outcomes(self, s: int, a: int) -> dict[tuple[int, int], float]:
        """{(next state, elapsed): probability} for one state-action pair."""
        rows = np.flatnonzero(self.sa_index == s * self.num_actions + a)
        dist: dict[tuple[int, int], float] = defaultdict(float)
        for r in rows:
            dist[(int(self.next_state[r]), int(self.elapsed[r]))] += float(self.prob[r])
        return dict(dist)

    @classmethod
    def from_dense(cls, P: np.ndarray, R: np.ndarray, gamma: float) -> "TabularMdp":
        """
        Hand-built MDP from P[s, a, s'] and R[s, a] or R[s, a, s'].

        Each step counts as one elapsed step; the start state is state 0.
        """
        P = np.asarray(P, dtype=np.float64)
        R = np.asarray(R, dtype=np.float64)
        if P.ndim != 3 or P.shape[2] != P.shape[0]:
            raise ContractViolation(f"P must have shape (S, A, S), got {P.shape}")
        num_states, num_actions, _ = P.shape
        if R.shape not in ((num_states, num_actions), P.shape):
            raise ContractViolation(f"R must have shape {(num_states, num_actions)} or {P.shape}, got {R.shape}")
        if R.ndim == 2:
            R = np.repeat(R[:, :, None], num_states, axis=2)
        s, a, nxt = np.nonzero(P)
        initial = np.zeros(num_states + 1)
        initial[0] = 1.0
        return cls(
            states=[(k,) for k in range(num_states)],
            num_actions=num_actions,
            sa_index=s * num_actions + a,
            next_state=nxt,
            prob=P[s, a, nxt],
            reward=R[s, a, nxt],
            discount=np.full(len(s), float(gamma)),
            elapsed=np.ones(len(s), dtype=np.int64),
            initial=initial,
            gamma=float(gamma),
        )


def state_space_bound(line_cfg: LineConfig) -> int:
    """prod_j (n + 1) * b_j: condition and buffer combinations of the line."""
    return math.prod((line_cfg.n + 1) * m.b for m in line_cfg.machines)


def _tick_branches(state: SimState, line_cfg: LineConfig) -> list[tuple[float, SimState]]:
    """Every successor of one tick with its probability."""
    operated = part_flow_tick(state, line_cfg)
    certain = [j for j in operated if line_cfg.machines[j].d >= 1.0]
    uncertain = [j for j in operated if 0.0 < line_cfg.machines[j].d < 1.0]
    for j in certain:
        apply_degradation(state, line_cfg, j, True)

    branches = []
    for draws in product((False, True), repeat=len(uncertain)):
        branch = state.copy() if uncertain else state
        p = 1.0
        for j, advanced in zip(uncertain, draws):
            d = line_cfg.machines[j].d
            p *= d if advanced else 1.0 - d
            apply_degradation(branch, line_cfg, j, advanced)
        branch.clock += 1
        complete_due_maintenance(branch, line_cfg)
        branches.append((p, branch))
    return branches


def propagate(
    state: SimState,
    line_cfg: LineConfig,
    duration: int,
    episodic: bool,
    track_parts: bool,
) -> dict[tuple, float]:
    """
    Distribution of where advance_until_decision can stop.

    Returns:
        {(next decision key or None for the end, elapsed, parts gained,
        breakdown present): probability}
    """
    start_clock = state.clock
    start_parts = state.produced_parts
    frontier: dict[tuple, tuple[float, SimState]] = {(state_key(state, True), 0): (1.0, state)}
    outcomes: dict[tuple, float] = defaultdict(float)

    while frontier:
        successors: dict[tuple, tuple[float, SimState]] = {}
        for (_, parts), (p, current) in frontier.items():
            elapsed = current.clock - start_clock
            stop_end = current.clock >= line_cfg.t_sim
            if stop_end or (elapsed >= duration and is_decision_point(current, line_cfg)):
                key = None if stop_end else state_key(current, include_clock=episodic)
                breakdown = any(m.condition >= line_cfg.n for m in current.machines)
                outcomes[(key, elapsed, parts, breakdown)] += p
                continue
            for q, nxt in _tick_branches(current, line_cfg):
                gained = nxt.produced_parts - start_parts if track_parts else 0
                nxt_key = (state_key(nxt, True), gained)
                if nxt_key in successors:
                    successors[nxt_key] = (successors[nxt_key][0] + p * q, successors[nxt_key][1])
                else:
                    successors[nxt_key] = (p * q, nxt)
        frontier = successors
    return dict(outcomes)


def _outcome_reward(
    reward_cfg: RewardConfig,
    kind: MaintenanceKind | None,
    elapsed: int,
    parts: int,
    breakdown: bool,
) -> float:
    if reward_cfg.mode is RewardMode.R1:
        return float(parts)
    return reward_r2(classify_scenario(kind, breakdown), kind, elapsed, reward_cfg)


def enumerate_mdp(
    line_cfg: LineConfig,
    reward_cfg: RewardConfig,
    horizon_mode: HorizonMode | str = HorizonMode.DISCOUNTED,
    gamma: float = 0.9,
    discount_mode: OracleDiscount | str = OracleDiscount.PER_STEP,
    state_cap: int = DEFAULT_STATE_CAP,
) -> TabularMdp:
    """
    Enumerate every decision-point state reachable from the empty line.

    In discounted mode the clock is dropped from the state and a path that
    finds no decision point within t_sim steps ends the episode.

    Raises:
        StateCapExceeded: the bound prod((n+1) * b_j) or the number of
            enumerated states exceeds `state_cap`.
    """
    horizon_mode = HorizonMode(horizon_mode)
    discount_mode = OracleDiscount(discount_mode)
    if not 0.0 <= gamma <= 1.0:
        raise ConfigError(f"invalid value for 'gamma': must lie in [0, 1], got {gamma}", key="gamma")
    bound = state_space_bound(line_cfg)
    if bound > state_cap:
        raise StateCapExceeded(
            f"state space bound {bound} exceeds the cap of {state_cap}; use a smaller instance (fewer machines, smaller n or b)"
        )

    episodic = horizon_mode is HorizonMode.EPISODIC
    track_parts = reward_cfg.mode is RewardMode.R1
    num_actions = line_cfg.num_machines + 1

    index: dict[StateKey, int] = {}
    states: list[StateKey] = []
    pending: list[int] = []

    def lookup(key: StateKey | None) -> int | None:
        if key is None:
            return None
        if key not in index:
            if len(states) >= state_cap:
                raise StateCapExceeded(f"more than {state_cap} decision states enumerated; use a smaller instance")
            index[key] = len(states)
            states.append(key)
            pending.append(index[key])
        return index[key]

    start = init_line(line_cfg, seed=0)
    start.rng = None
    initial_outcomes = []
    for (key, _, _, _), p in propagate(start, line_cfg, 0, episodic, False).items():
        initial_outcomes.append((lookup(key), p))

    rows: list[tuple[int, int | None, float, float, float, int]] = []
    while pending:
        s = pending.pop()
        for a in range(num_actions):
            state = state_from_key(states[s])
            kind, duration = commit_action(state, line_cfg, a)
            for (key, elapsed, parts, breakdown), p in propagate(state, line_cfg, duration, episodic, track_parts).items():
                discount = gamma**elapsed if discount_mode is OracleDiscount.PER_STEP else gamma
                reward = _outcome_reward(reward_cfg, kind, elapsed, parts, breakdown)
                rows.append((s * num_actions + a, lookup(key), p, reward, discount, elapsed))

    terminal = len(states)
    initial = np.zeros(terminal + 1)
    for s, p in initial_outcomes:
        initial[terminal if s is None else s] += p

    logger.info("[Oracle] %d decision states, %d outcome rows", len(states), len(rows))
    return TabularMdp(
        states=states,
        num_actions=num_actions,
        sa_index=np.array([r[0] for r in rows], dtype=np.int64),
        next_state=np.array([terminal if r[1] is None else r[1] for r in rows], dtype=np.int64),
        prob=np.array([r[2] for r in rows], dtype=np.float64),
        reward=np.array([r[3] for r in rows], dtype=np.float64),
        discount=np.array([r[4] for r in rows], dtype=np.float64),
        elapsed=np.array([r[5] for r in rows], dtype=np.int64),
        initial=initial,
        gamma=gamma,
        horizon_mode=horizon_mode,
        index=index,
    )
