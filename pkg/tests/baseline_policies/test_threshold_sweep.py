"""
Unit tests for the FIFO threshold sweep.
"""

import pandas as pd
import pytest

from flowline_maintenance.baseline_policies.threshold_sweep import (
    SWEEP_COLUMNS,
    Criterion,
    best_threshold,
    sweep_threshold,
)
from flowline_maintenance.errors import ConfigError
from flowline_maintenance.flowline_sim.line_config import LineConfig, MachineConfig
from flowline_maintenance.mdp_env.rewards import RewardConfig


def _line(d, n=10, t_sim=60):
    return LineConfig(
        machines=tuple(MachineConfig(p=2, d=d, b=5) for _ in range(3)),
        n=n,
        t_cbm=5,
        t_cm=20,
        t_sim=t_sim,
        seed=0,
    )


def test_no_degradation_makes_all_thresholds_equal():
    """
    Without degradation no maintenance is ever needed; every row is equal
    and the lowest threshold wins the tie.
    """
    result = sweep_threshold(_line(0.0), RewardConfig(), "max_parts", 2, base_seed=0)
    assert list(result.table.columns) == SWEEP_COLUMNS
    assert result.table["threshold"].tolist() == list(range(11))
    assert result.table["mean_parts"].nunique() == 1
    assert (result.table["mean_cost"] == 0).all()
    assert result.best_threshold == 0


def test_sweep_is_reproducible_for_the_same_seeds():
    a = sweep_threshold(_line(0.3, n=4, t_sim=120), RewardConfig(), Criterion.MIN_COST, 3, base_seed=5)
    b = sweep_threshold(_line(0.3, n=4, t_sim=120), RewardConfig(), Criterion.MIN_COST, 3, base_seed=5)
    pd.testing.assert_frame_equal(a.table, b.table)
    assert a.best_threshold == b.best_threshold
    assert len(a.table) == 5


def test_best_threshold_per_criterion_with_tie_rule():
    table = pd.DataFrame(
        {
            "threshold": [0, 1, 2, 3],
            "mean_parts": [10.0, 30.0, 30.0, 20.0],
            "mean_cost": [9.0, 4.0, 2.0, 2.0],
            "mean_cbm": [0.0] * 4,
            "mean_cm": [0.0] * 4,
        }
    )
    assert best_threshold(table, Criterion.MAX_PARTS) == 1
    assert best_threshold(table, "min_cost") == 2


def test_unknown_criterion_rejected():
    with pytest.raises(ConfigError, match="criterion"):
        sweep_threshold(_line(0.1), RewardConfig(), "fastest", 1, base_seed=0)
