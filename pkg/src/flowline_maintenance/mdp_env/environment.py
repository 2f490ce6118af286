"""Episodic MDP wrapper around the flow line simulator."""

import logging
from dataclasses import dataclass

import numpy as np

from flowline_maintenance.errors import ContractViolation, EpisodeFinishedError
from flowline_maintenance.flowline_sim.line_config import LineConfig
from flowline_maintenance.flowline_sim.simulator import (
    MaintenanceKind,
    SimState,
    advance_until_decision,
    apply_maintenance,
    init_line,
    is_terminal,
)
from flowline_maintenance.mdp_env.rewards import (
    RewardConfig,
    RewardMode,
    Scenario,
    classify_scenario,
    reward_r1,
    reward_r2,
)

logger = logging.getLogger(__name__)

IDLE = 0


@dataclass(frozen=True)
class Transition:
    obs: np.ndarray
    action: int
    reward: float
    next_obs: np.ndarray
    terminal: bool
    elapsed: int
    kind: MaintenanceKind | None
    breakdown_present: bool
    scenario: Scenario
    clock: int  # t_k, the clock of the decision point the action was taken at

    @property
    def info(self) -> dict:
        return {"kind": self.kind, "breakdown_present": self.breakdown_present}


def encode_observation(state: SimState, config: LineConfig) -> np.ndarray:
    """[cs_1/n, ..., cs_i/n, level_1/b_1, ..., level_i/b_i] as float64."""
    conditions = [m.condition / config.n for m in state.machines]
    levels = [level / spec.b for level, spec in zip(state.buffer_levels, config.machines)]
    return np.asarray(conditions + levels, dtype=np.float64)


def decode_observation(obs: np.ndarray, config: LineConfig) -> tuple[list[int], list[int]]:
    """Recover the integer conditions and buffer levels from an observation."""
    i = config.num_machines
    conditions = [int(round(v * config.n)) for v in obs[:i]]
    levels = [int(round(v * spec.b)) for v, spec in zip(obs[i:], config.machines)]
    return conditions, levels


def commit_action(state: SimState, config: LineConfig, action: int) -> tuple[MaintenanceKind | None, int]:
    """
    Commit an action code at the current decision point.

    Returns:
        (kind, duration): kind is None for the idle action.
    """
    if not 0 <= action <= config.num_machines:
        raise ContractViolation(f"action {action} outside the action space 0..{config.num_machines}")
    if action == IDLE:
        return None, config.t_idle
    kind = apply_maintenance(state, config, action - 1)
    duration = config.t_cm if kind is MaintenanceKind.CM else config.t_cbm
    return kind, duration


class FlowLineEnv:
    """
    Decision-point MDP over one flow line.

    Actions: 0 = idle, j = maintain machine j (CBM, or CM if it is broken).
    """

    def __init__(self, line_cfg: LineConfig, reward_cfg: RewardConfig):
        self.line_cfg = line_cfg
        self.reward_cfg = reward_cfg
        self.state: SimState | None = None
        # parts already paid out as R1 reward this episode
        self._credited_parts = 0
        self.decisions = 0

    @property
    def num_actions(self) -> int:
        return self.line_cfg.num_machines + 1

    @property
    def observation_size(self) -> int:
        return 2 * self.line_cfg.num_machines

    @property
    def terminal(self) -> bool:
        return self.state is not None and is_terminal(self.state, self.line_cfg)

    def observe(self) -> np.ndarray:
        return encode_observation(self.state, self.line_cfg)

    def reset(self, seed: int | None = None) -> np.ndarray:
        """Fresh line advanced to its first decision point (or to t_sim if none occurs)."""
        self.state = init_line(self.line_cfg, seed)
        self._credited_parts = 0
        self.decisions = 0
        advance_until_decision(self.state, self.line_cfg, 0)
        if self.terminal:
            logger.debug("[Env] no decision point before t_sim=%d", self.line_cfg.t_sim)
        return self.observe()

    def step(self, action: int) -> Transition:
        if self.state is None:
            raise ContractViolation("reset() must be called before step()")
        if self.terminal:
            raise EpisodeFinishedError(f"episode already ended at t={self.state.clock}")

        obs = self.observe()
        clock = self.state.clock

        kind, duration = commit_action(self.state, self.line_cfg, int(action))
        elapsed = advance_until_decision(self.state, self.line_cfg, duration)
        self.decisions += 1

        breakdown_present = any(m.condition >= self.line_cfg.n for m in self.state.machines)
        scenario = classify_scenario(kind, breakdown_present)
        if self.reward_cfg.mode is RewardMode.R1:
            # the first transition also pays for the parts made before the first decision
            reward = reward_r1(self._credited_parts, self.state.produced_parts)
            self._credited_parts = self.state.produced_parts
        else:
            reward = reward_r2(scenario, kind, elapsed, self.reward_cfg)

        return Transition(
            obs=obs,
            action=int(action),
            reward=reward,
            next_obs=self.observe(),
            terminal=self.terminal,
            elapsed=elapsed,
            kind=kind,
            breakdown_present=breakdown_present,
            scenario=scenario,
            clock=clock,
        )
