"""
Step-based discrete-event simulation of a flow line with degrading machines.

One simulation step (tick) runs in a fixed order so that runs are
reproducible from (config, seed, actions):

    1. part flow, machines in line order 1..i
    2. degradation draws for every machine that worked during the tick
    3. clock advance, then completion of a maintenance job that is due
    4. decision-point test (in advance_until_decision)

Machine 1 pulls from an unbounded source and the last machine delivers into
an unbounded sink counted by `produced_parts`. A single maintenance resource
serves one machine at a time.
"""

import copy
import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from flowline_maintenance.errors import ContractViolation
from flowline_maintenance.flowline_sim.line_config import LineConfig

logger = logging.getLogger(__name__)


class Status(str, Enum):
    STARVED = "starved"
    PROCESSING = "processing"
    BLOCKED = "blocked"
    BROKEN = "broken"
    UNDER_MAINTENANCE = "under_maintenance"


class MaintenanceKind(str, Enum):
    CBM = "CBM"
    CM = "CM"


@dataclass
class MachineState:
    condition: int = 0
    status: Status = Status.STARVED
    work_remaining: int = 0
    holds_part: bool = False
    # condition -> clock at which it was entered, since the last maintenance
    reached_at: dict[int, int] = field(default_factory=dict)

    def resume_status(self) -> Status:
        """Status a machine returns to after maintenance; its part is kept frozen."""
        if not self.holds_part:
            return Status.STARVED
        if self.work_remaining > 0:
            return Status.PROCESSING
        return Status.BLOCKED


@dataclass
class SimState:
    """
    Dynamic state of the line.

    `buffer_levels[j]` is the level of machine j's upstream buffer. Machine 1
    draws straight from the source, so `buffer_levels[0]` stays 0.
    """

    clock: int
    machines: list[MachineState]
    buffer_levels: list[int]
    produced_parts: int = 0
    resource_busy_until: int | None = None
    maintained_machine: int | None = None
    source_pulls: int = 0
    rng: np.random.Generator | None = field(default=None, repr=False)

    @property
    def resource_free(self) -> bool:
        return self.resource_busy_until is None

    def conditions(self) -> list[int]:
        return [m.condition for m in self.machines]

    def parts_in_system(self) -> int:
        return sum(self.buffer_levels) + sum(1 for m in self.machines if m.holds_part)

    def copy(self) -> "SimState":
        return copy.deepcopy(self)


def init_line(config: LineConfig, seed: int | None = None) -> SimState:
    """
    Fresh line at clock 0: every machine new (cs=0) and starved, buffers empty.

    Args:
        config: validated line description.
        seed: RNG seed of this episode; defaults to `config.seed`.
    """
    rng = np.random.default_rng(config.seed if seed is None else seed)
    return SimState(
        clock=0,
        machines=[MachineState() for _ in config.machines],
        buffer_levels=[0] * config.num_machines,
        rng=rng,
    )


def degrade_step(condition: int, rate: float, breakdown_state: int, rng: np.random.Generator) -> int:
    """One Markov transition of the condition chain; the breakdown state is absorbing."""
    if condition >= breakdown_state:
        return breakdown_state
    if rng.random() < rate:
        return condition + 1
    return condition


def _deliver(state: SimState, config: LineConfig, j: int, arrivals: list[int]) -> bool:
    machine = state.machines[j]
    if j == config.num_machines - 1:
        state.produced_parts += 1
    else:
        if state.buffer_levels[j + 1] >= config.machines[j + 1].b:
            machine.status = Status.BLOCKED
            return False
        state.buffer_levels[j + 1] += 1
        arrivals[j + 1] += 1
    machine.holds_part = False
    machine.status = Status.STARVED
    return True


def part_flow_tick(state: SimState, config: LineConfig) -> list[int]:
    """
    Move parts through the line for one step, machines in order 1..i.

    A blocked machine first retries its delivery. A starved machine pulls a
    part that was already in its upstream buffer when the tick started (or
    from the source for machine 1) and sets work_remaining = p. A processing
    machine works one unit; when the part completes it goes downstream if
    there is space, otherwise the machine is blocked.

    Returns:
        indices of the machines that worked during this tick (they degrade).
    """
    arrivals = [0] * config.num_machines
    operated = []
    for j, (spec, machine) in enumerate(zip(config.machines, state.machines)):
        if machine.status in (Status.BROKEN, Status.UNDER_MAINTENANCE):
            continue
        if machine.status is Status.BLOCKED and not _deliver(state, config, j, arrivals):
            continue
        if machine.status is Status.STARVED:
            if j == 0:
                state.source_pulls += 1
            elif state.buffer_levels[j] - arrivals[j] > 0:
                state.buffer_levels[j] -= 1
            else:
                continue
            machine.holds_part = True
            machine.work_remaining = spec.p
            machine.status = Status.PROCESSING

        machine.work_remaining -= 1
        operated.append(j)
        if machine.work_remaining == 0:
            _deliver(state, config, j, arrivals)
    return operated


def apply_degradation(state: SimState, config: LineConfig, j: int, advanced: bool) -> None:
    """
    Record the outcome of machine j's degradation draw; reaching n breaks it down.

    Called before the clock advances, so a new condition is stamped with
    `state.clock + 1`, the first clock at which it can be observed.
    """
    if not advanced:
        return
    machine = state.machines[j]
    machine.condition = min(machine.condition + 1, config.n)
    machine.reached_at.setdefault(machine.condition, state.clock + 1)
    if machine.condition >= config.n:
        machine.status = Status.BROKEN
        logger.debug("[Sim] t=%d machine %d broke down", state.clock, j + 1)


def complete_due_maintenance(state: SimState, config: LineConfig) -> int | None:
    """Finish the running maintenance job if it is due; returns the machine index."""
    if state.resource_busy_until is None or state.clock < state.resource_busy_until:
        return None
    j = state.maintained_machine
    machine = state.machines[j]
    machine.condition = 0
    machine.reached_at.clear()
    machine.status = machine.resume_status()
    state.resource_busy_until = None
    state.maintained_machine = None
    return j


def simulate_tick(state: SimState, config: LineConfig) -> list[int]:
    operated = part_flow_tick(state, config)
    for j in operated:
        machine = state.machines[j]
        new_condition = degrade_step(machine.condition, config.machines[j].d, config.n, state.rng)
        apply_degradation(state, config, j, new_condition > machine.condition)
    state.clock += 1
    complete_due_maintenance(state, config)
    return operated


def apply_maintenance(state: SimState, config: LineConfig, machine: int) -> MaintenanceKind:
    """
    Start CBM (or CM, if the machine is broken) on a 0-based machine index.

    The machine is under maintenance and the resource busy for t_cbm / t_cm
    steps; on completion the condition is reset to 0.

    Raises:
        ContractViolation: the resource is busy or the index is out of range.
    """
    if not state.resource_free:
        raise ContractViolation(
            f"maintenance requested at t={state.clock} while the resource is busy until {state.resource_busy_until}"
        )
    if not 0 <= machine < config.num_machines:
        raise ContractViolation(f"machine index {machine} out of range for {config.num_machines} machines")

    target = state.machines[machine]
    kind = MaintenanceKind.CM if target.condition >= config.n else MaintenanceKind.CBM
    duration = config.t_cm if kind is MaintenanceKind.CM else config.t_cbm
    target.status = Status.UNDER_MAINTENANCE
    state.resource_busy_until = state.clock + duration
    state.maintained_machine = machine
    return kind


def is_decision_point(state: SimState, config: LineConfig) -> bool:
    return state.resource_free and any(m.condition > config.n_c for m in state.machines)


def is_terminal(state: SimState, config: LineConfig) -> bool:
    return state.clock >= config.t_sim


def advance_until_decision(state: SimState, config: LineConfig, pending_action_duration: int) -> int:
    """
    Run the line until the next decision point or until t_sim.

    Stops at the first clock >= commit time + pending_action_duration where
    the maintenance resource is free and some machine is above n_c.

    Returns:
        elapsed steps t_{k+1} - t_k.
    """
    start = state.clock
    earliest = start + pending_action_duration
    while state.clock < config.t_sim:
        if state.clock >= earliest and is_decision_point(state, config):
            break
        simulate_tick(state, config)
    return state.clock - start


StateKey = tuple


def state_key(state: SimState, include_clock: bool = False) -> StateKey:
    """Hashable snapshot of everything that drives future dynamics (RNG excluded)."""
    machines = tuple((m.condition, m.status.value, m.work_remaining, m.holds_part) for m in state.machines)
    maintenance = None
    if state.resource_busy_until is not None:
        maintenance = (state.maintained_machine, state.resource_busy_until - state.clock)
    clock = state.clock if include_clock else None
    return machines, tuple(state.buffer_levels), maintenance, clock


def state_from_key(key: StateKey, rng: np.random.Generator | None = None) -> SimState:
    machines_key, buffers, maintenance, clock = key
    state = SimState(
        clock=clock or 0,
        machines=[
            MachineState(condition=cs, status=Status(status), work_remaining=wr, holds_part=holds)
            for cs, status, wr, holds in machines_key
        ],
        buffer_levels=list(buffers),
        rng=rng,
    )
    if maintenance is not None:
        state.maintained_machine, remaining = maintenance
        state.resource_busy_until = state.clock + remaining
    return state
