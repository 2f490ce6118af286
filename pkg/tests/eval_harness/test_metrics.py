"""
Unit tests for episode metrics, summary tables and their CSV files.
"""

import pandas as pd
import pytest

from flowline_maintenance.eval_harness.metrics import (
    DecisionRecord,
    EpisodeMetrics,
    condition_at_cbm_stats,
    cm_timeline,
    episodes_frame,
    late_cm_count,
    machines_frame,
    production_rate,
    summarize,
    write_evaluation_tables,
)
from flowline_maintenance.flowline_sim.line_config import LineConfig, MachineConfig


def _line(p_max, t_sim=400, machines=2):
    specs = [MachineConfig(p=1, d=0.1, b=2)] * (machines - 1) + [MachineConfig(p=p_max, d=0.1, b=2)]
    return LineConfig(machines=tuple(specs), n=10, t_cbm=5, t_cm=20, t_sim=t_sim, seed=0)


def _metrics(episode=0, policy="fifo:5", parts=50, cbm=(2, 1), cm=((1, 350), (2, 100)), idle=4, conditions=((1, 7), (1, 9), (2, 6))):
    return EpisodeMetrics(
        episode=episode,
        policy=policy,
        produced_parts=parts,
        maintenance_cost=0.5 * sum(cbm) + 1.5 * len(cm),
        cbm_count=sum(cbm),
        cm_count=len(cm),
        idle_count=idle,
        per_machine_cbm=list(cbm),
        cbm_conditions=list(conditions),
        cm_events=list(cm),
        decisions=sum(cbm) + len(cm) + idle,
    )


@pytest.mark.parametrize(
    "mean_parts, p_max, t_sim, expected",
    [
        (63.1, 5, 400, 0.78875),
        (65.4, 5, 400, 0.8175),
        (98.1, 2, 400, 0.4905),
        (0.0, 3, 400, 0.0),
    ],
)
def test_production_rate(mean_parts, p_max, t_sim, expected):
    assert production_rate(mean_parts, _line(p_max, t_sim)) == pytest.approx(expected)


def test_summary_of_single_episode_equals_its_values():
    line = _line(2)
    table = summarize({"fifo:5": [_metrics()]}, line)
    row = table.iloc[0]
    assert row["policy"] == "fifo:5"
    assert row["mean_parts"] == 50
    assert row["std_parts"] == 0
    assert row["mean_cbm"] == 3 and row["mean_cm"] == 2 and row["mean_idle"] == 4
    assert row["production_rate"] == pytest.approx(50 / 200)


def test_summary_keeps_policy_order_and_cost_identity():
    line = _line(2)
    runs = {
        "random": [_metrics(k, "random", parts=10 + k, cbm=(k, 1), cm=((1, 10),) * k) for k in range(4)],
        "fifo:5": [_metrics(k, "fifo:5", parts=60 - k) for k in range(3)],
    }
    table = summarize(runs, line)
    assert table["policy"].tolist() == ["random", "fifo:5"]
    for _, row in table.iterrows():
        assert row["mean_cost"] == pytest.approx(0.5 * row["mean_cbm"] + 1.5 * row["mean_cm"])


def test_summary_is_permutation_invariant():
    line = _line(2)
    runs = [_metrics(k, parts=10 * k, cbm=(k, 2)) for k in range(5)]
    a = summarize({"p": runs}, line)
    b = summarize({"p": runs[::-1]}, line)
    pd.testing.assert_frame_equal(a, b)


def test_summary_rejects_empty_input():
    with pytest.raises(ValueError):
        summarize({}, _line(2))
    with pytest.raises(ValueError):
        summarize({"fifo:5": []}, _line(2))


def test_condition_at_cbm_stats():
    assert condition_at_cbm_stats([_metrics(conditions=((3, 7),))]) == {3: 7.0}
    stats = condition_at_cbm_stats([_metrics(), _metrics(conditions=((1, 8),))])
    assert stats == {1: pytest.approx(8.0), 2: 6.0}
    assert condition_at_cbm_stats([_metrics(conditions=())]) == {}


def test_cm_timeline_is_sorted_by_clock():
    runs = [_metrics(cm=()), _metrics(cm=((2, 300), (1, 40), (3, 40)))]
    assert cm_timeline(runs, 0) == []
    assert cm_timeline(runs, 1) == [(1, 40), (3, 40), (2, 300)]
    with pytest.raises(IndexError):
        cm_timeline(runs, 2)


def test_late_cm_count_uses_final_quarter():
    line = _line(2, t_sim=400)
    runs = [_metrics(cm=((1, 299), (1, 300), (2, 399))), _metrics(cm=((1, 10),))]
    assert late_cm_count(runs, line) == pytest.approx(1.0)
    assert late_cm_count([], line) == 0.0


def test_machine_table_uses_one_based_machines():
    frame = machines_frame({"fifo:5": [_metrics(), _metrics(cbm=(0, 3), conditions=((2, 8),))]})
    assert frame["machine"].tolist() == [1, 2]
    assert frame["cbm_count_mean"].tolist() == [1.0, 2.0]
    assert frame["cbm_condition_mean"].tolist() == pytest.approx([8.0, 7.0])


def test_written_tables_have_contract_headers(tmp_path):
    line = _line(2)
    first = _metrics()
    first.trace = [DecisionRecord(clock=12, action=0, kind="idle", conditions=(1, 0)), DecisionRecord(14, 2, "CBM", (1, 2))]
    paths = write_evaluation_tables(tmp_path / "eval", {"fifo:5": [first, _metrics(episode=1)]}, line)

    def header(name):
        return paths[name].read_text().splitlines()[0]

    assert header("episodes") == "episode,policy,parts,cost,cbm,cm,idle"
    assert header("machines") == "policy,machine,cbm_count_mean,cbm_condition_mean"
    assert header("cm_timeline") == "episode,policy,machine,clock"
    assert header("decision_trace") == "episode,policy,clock,action,kind,cs_1,cs_2"
    assert header("summary").startswith("policy,mean_parts")
    assert len(paths["episodes"].read_text().splitlines()) == 3
    assert len(episodes_frame([first]).index) == 1
