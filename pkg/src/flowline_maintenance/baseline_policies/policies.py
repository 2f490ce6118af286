"""
Maintenance scheduling policies evaluated by the harness.

Every policy maps (observation, simulator state) at a decision point to an
action code: 0 = idle, j = maintain machine j (1-based).
"""

import logging
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np

from flowline_maintenance.errors import ConfigError
from flowline_maintenance.flowline_sim.line_config import LineConfig
from flowline_maintenance.flowline_sim.simulator import SimState
from flowline_maintenance.mdp_env.environment import IDLE
from flowline_maintenance.neural_core.checkpoint import load_checkpoint
from flowline_maintenance.neural_core.q_network import QNetwork, forward

logger = logging.getLogger(__name__)


@runtime_checkable
class Policy(Protocol):
    name: str
    # n_c the environment must run with; None keeps the line's own value
    env_n_c: int | None

    def reset(self, seed: int) -> None: ...

    def act(self, obs: np.ndarray, state: SimState) -> int: ...


class FifoQueue:
    """
    Maintenance requests in the order machines crossed the critical threshold.

    A machine is enqueued at the first decision point that sees it above the
    threshold, behind machines that crossed earlier, and leaves the queue only
    when it is maintained.
    """

    def __init__(self, threshold: int):
        self.threshold = threshold
        self._queue: list[int] = []
        self.crossed_at: dict[int, int] = {}

    def __len__(self) -> int:
        return len(self._queue)

    def __contains__(self, machine: int) -> bool:
        return machine in self.crossed_at

    @property
    def order(self) -> list[int]:
        return list(self._queue)

    def head(self) -> int | None:
        return self._queue[0] if self._queue else None

    def observe(self, conditions: list[int], clock: int, crossings: list[int | None] | None = None) -> None:
        """
        Enqueue machines (0-based) newly above the threshold.

        New entrants are ordered by the clock at which they crossed, from
        `crossings[j]` when known and `clock` otherwise; index order on ties.
        """
        entrants = []
        for j, cs in enumerate(conditions):
            if cs > self.threshold and j not in self.crossed_at:
                crossed = crossings[j] if crossings is not None else None
                entrants.append((clock if crossed is None else crossed, j))
        for crossed, j in sorted(entrants):
            self._queue.append(j)
            self.crossed_at[j] = crossed

    def pop(self, machine: int) -> None:
        self._queue.remove(machine)
        del self.crossed_at[machine]

    def clear(self) -> None:
        self._queue.clear()
        self.crossed_at.clear()


class FifoPolicy:
    """
    First-in-first-out maintenance with a critical threshold n_c.

    The environment runs with n_c = 0 so that a decision point occurs
    whenever any machine has degraded; the policy idles until some machine
    exceeds its own threshold.
    """

    env_n_c = 0

    def __init__(self, threshold: int):
        if threshold < 0:
            raise ValueError(f"threshold must be >= 0, got {threshold}")
        self.threshold = threshold
        self.queue = FifoQueue(threshold)
        self.name = f"fifo:{threshold}"

    def reset(self, seed: int) -> None:
        self.queue.clear()

    def act(self, obs: np.ndarray, state: SimState) -> int:
        crossings = [m.reached_at.get(self.threshold + 1) for m in state.machines]
        self.queue.observe(state.conditions(), state.clock, crossings)
        head = self.queue.head()
        if head is None:
            return IDLE
        self.queue.pop(head)
        return head + 1


def random_policy(rng: np.random.Generator, num_machines: int) -> int:
    """Uniform draw over {0, ..., i}."""
    return int(rng.integers(0, num_machines + 1))


class RandomPolicy:
    name = "random"
    env_n_c = None

    def __init__(self, num_machines: int, seed: int = 0):
        self.num_machines = num_machines
        self.rng = np.random.default_rng([seed, 2])

    def reset(self, seed: int) -> None:
        # stream 2 keeps action draws independent of the simulator's stream
        self.rng = np.random.default_rng([seed, 2])

    def act(self, obs: np.ndarray, state: SimState) -> int:
        return random_policy(self.rng, self.num_machines)


class GreedyQPolicy:
    """Greedy action of a trained Q-network (lowest action index on ties)."""

    env_n_c = None

    def __init__(self, net: QNetwork, name: str = "ddqn"):
        self.net = net
        self.name = name

    def reset(self, seed: int) -> None:
        pass

    def act(self, obs: np.ndarray, state: SimState) -> int:
        return int(np.argmax(forward(self.net, obs)))


def policy_from_spec(spec: str, line_cfg: LineConfig) -> Policy:
    """
    Build a policy from its command-line form.

    Args:
        spec: `random`, `fifo:<n_c>` or the path of a checkpoint.
    """
    if spec == "random":
        return RandomPolicy(line_cfg.num_machines)
    if spec.startswith("fifo:"):
        raw = spec.split(":", 1)[1]
        try:
            threshold = int(raw)
        except ValueError as exc:
            raise ConfigError(f"invalid FIFO threshold in policy '{spec}'", key="policy") from exc
        if not 0 <= threshold <= line_cfg.n:
            raise ConfigError(f"FIFO threshold must lie in 0..{line_cfg.n}, got {threshold}", key="policy")
        return FifoPolicy(threshold)

    net, metadata = load_checkpoint(spec)
    expected = 2 * line_cfg.num_machines
    if net.layer_sizes[0] != expected or net.layer_sizes[-1] != line_cfg.num_machines + 1:
        raise ConfigError(
            f"checkpoint {spec} was trained for {net.layer_sizes[-1] - 1} machines, the line has {line_cfg.num_machines}",
            key="policy",
        )
    logger.info("[Eval] loaded checkpoint %s (episode %s)", spec, metadata.get("best_episode"))
    return GreedyQPolicy(net, name=Path(spec).stem)
