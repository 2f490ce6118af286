from dataclasses import dataclass

import numpy as np

from flowline_maintenance.mdp_env.environment import Transition


@dataclass
class ReplayBatch:
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_obs: np.ndarray
    terminals: np.ndarray
    elapsed: np.ndarray


class ReplayBuffer:
    """Experience replay memory; a ring over preallocated arrays, oldest evicted first."""

    def __init__(self, capacity: int = 100_000):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._size = 0
        self._next = 0
        self._obs: np.ndarray | None = None
        self._next_obs: np.ndarray | None = None
        self._actions = np.zeros(capacity, dtype=np.int64)
        self._rewards = np.zeros(capacity, dtype=np.float64)
        self._terminals = np.zeros(capacity, dtype=bool)
        self._elapsed = np.zeros(capacity, dtype=np.int64)

    def __len__(self) -> int:
        return self._size

    def is_ready(self, batch_size: int) -> bool:
        return self._size >= batch_size

    def push(self, transition: Transition) -> None:
        if self._obs is None:
            dim = len(transition.obs)
            self._obs = np.zeros((self.capacity, dim), dtype=np.float64)
            self._next_obs = np.zeros((self.capacity, dim), dtype=np.float64)
        k = self._next
        self._obs[k] = transition.obs
        self._next_obs[k] = transition.next_obs
        self._actions[k] = transition.action
        self._rewards[k] = transition.reward
        self._terminals[k] = transition.terminal
        self._elapsed[k] = transition.elapsed
        self._next = (k + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> ReplayBatch:
        """Uniform sample without replacement."""
        if batch_size > self._size:
            raise ValueError(f"cannot sample {batch_size} transitions from {self._size}")
        idx = rng.choice(self._size, size=batch_size, replace=False)
        return ReplayBatch(
            obs=self._obs[idx],
            actions=self._actions[idx],
            rewards=self._rewards[idx],
            next_obs=self._next_obs[idx],
            terminals=self._terminals[idx],
            elapsed=self._elapsed[idx],
        )

    def oldest_index(self) -> int:
        """Slot holding the oldest stored transition."""
        return self._next if self._size == self.capacity else 0

    def rewards(self) -> np.ndarray:
        """Stored rewards, oldest first."""
        order = (np.arange(self._size) + self.oldest_index()) % self.capacity
        return self._rewards[order]
