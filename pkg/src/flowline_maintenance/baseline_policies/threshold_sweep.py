import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np
import pandas as pd

from flowline_maintenance.baseline_policies.policies import FifoPolicy
from flowline_maintenance.errors import ConfigError
from flowline_maintenance.eval_harness.runner import run_episodes
from flowline_maintenance.flowline_sim.line_config import LineConfig
from flowline_maintenance.mdp_env.rewards import RewardConfig

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ["threshold", "mean_parts", "mean_cost", "mean_cbm", "mean_cm"]


class Criterion(str, Enum):
    MAX_PARTS = "max_parts"
    MIN_COST = "min_cost"


@dataclass
class SweepResult:
    criterion: Criterion
    best_threshold: int
    table: pd.DataFrame

    def to_csv(self, path) -> None:
        self.table.to_csv(path, index=False)


def best_threshold(table: pd.DataFrame, criterion: Criterion | str) -> int:
    """Best row of a sweep table; the lowest threshold wins ties."""
    criterion = Criterion(criterion)
    ordered = table.sort_values("threshold")
    if criterion is Criterion.MAX_PARTS:
        idx = int(np.argmax(ordered["mean_parts"].to_numpy()))
    else:
        idx = int(np.argmin(ordered["mean_cost"].to_numpy()))
    return int(ordered["threshold"].iloc[idx])


def sweep_threshold(
    line_cfg: LineConfig,
    reward_cfg: RewardConfig,
    criterion: Criterion | str,
    episodes_per_value: int,
    base_seed: int,
    workers: int = 1,
) -> SweepResult:
    """
    Evaluate FIFO for every threshold n_c in 0..n on the same episode seeds.

    Returns:
        the best threshold under `criterion` and the full table.
    """
    try:
        criterion = Criterion(criterion)
    except ValueError as exc:
        raise ConfigError(f"unknown criterion '{criterion}', expected max_parts or min_cost", key="criterion") from exc
    if episodes_per_value < 1:
        raise ConfigError("episodes per threshold must be >= 1", key="episodes")

    rows = []
    for threshold in range(line_cfg.n + 1):
        runs = run_episodes(FifoPolicy(threshold), line_cfg, reward_cfg, episodes_per_value, base_seed, workers)
        rows.append(
            {
                "threshold": threshold,
                "mean_parts": float(np.mean([m.produced_parts for m in runs])),
                "mean_cost": float(np.mean([m.maintenance_cost for m in runs])),
                "mean_cbm": float(np.mean([m.cbm_count for m in runs])),
                "mean_cm": float(np.mean([m.cm_count for m in runs])),
            }
        )
        logger.debug("[Sweep] n_c=%d -> %s", threshold, rows[-1])

    table = pd.DataFrame(rows, columns=SWEEP_COLUMNS)
    best = best_threshold(table, criterion)
    logger.info("[Sweep] best threshold for %s: %d", criterion.value, best)
    return SweepResult(criterion=criterion, best_threshold=best, table=table)
