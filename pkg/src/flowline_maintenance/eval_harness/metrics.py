"""
Per-episode metrics and the summary tables built from them.

Machines are numbered 1..i in every metric and table.
"""

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from flowline_maintenance.flowline_sim.line_config import LineConfig

EPISODE_COLUMNS = ["episode", "policy", "parts", "cost", "cbm", "cm", "idle"]
MACHINE_COLUMNS = ["policy", "machine", "cbm_count_mean", "cbm_condition_mean"]
CM_TIMELINE_COLUMNS = ["episode", "policy", "machine", "clock"]
SUMMARY_COLUMNS = [
    "policy",
    "mean_parts",
    "std_parts",
    "mean_cost",
    "production_rate",
    "mean_cbm",
    "mean_cm",
    "mean_idle",
    "mean_decisions",
]


@dataclass
class DecisionRecord:
    clock: int
    action: int
    kind: str  # "CBM", "CM" or "idle"
    conditions: tuple[int, ...]


@dataclass
class EpisodeMetrics:
    episode: int
    policy: str
    produced_parts: int
    maintenance_cost: float
    cbm_count: int
    cm_count: int
    idle_count: int
    per_machine_cbm: list[int]
    cbm_conditions: list[tuple[int, int]] = field(default_factory=list)  # (machine, cs at CBM)
    cm_events: list[tuple[int, int]] = field(default_factory=list)  # (machine, clock)
    decisions: int = 0
    total_reward: float = 0.0
    trace: list[DecisionRecord] | None = None


def production_rate(mean_parts: float, line_cfg: LineConfig) -> float:
    """Mean produced parts as a fraction of rho_max = t_sim / p_max."""
    return mean_parts / line_cfg.rho_max


def _group(metrics: Mapping[str, Sequence[EpisodeMetrics]] | Sequence[EpisodeMetrics]) -> dict[str, list[EpisodeMetrics]]:
    if isinstance(metrics, Mapping):
        return {name: list(runs) for name, runs in metrics.items()}
    grouped: dict[str, list[EpisodeMetrics]] = {}
    for m in metrics:
        grouped.setdefault(m.policy, []).append(m)
    return grouped


def summarize(metrics: Mapping[str, Sequence[EpisodeMetrics]], line_cfg: LineConfig) -> pd.DataFrame:
    """
    One row of episode means per policy, in the order the policies are given.

    Raises:
        ValueError: no policies, or a policy without episodes.
    """
    if not metrics:
        raise ValueError("summarize needs at least one policy")
    rows = []
    for name, runs in metrics.items():
        if not runs:
            raise ValueError(f"no episodes recorded for policy '{name}'")
        parts = np.array([m.produced_parts for m in runs], dtype=np.float64)
        mean_parts = float(parts.mean())
        rows.append(
            {
                "policy": name,
                "mean_parts": mean_parts,
                "std_parts": float(parts.std()),
                "mean_cost": float(np.mean([m.maintenance_cost for m in runs])),
                "production_rate": production_rate(mean_parts, line_cfg),
                "mean_cbm": float(np.mean([m.cbm_count for m in runs])),
                "mean_cm": float(np.mean([m.cm_count for m in runs])),
                "mean_idle": float(np.mean([m.idle_count for m in runs])),
                "mean_decisions": float(np.mean([m.decisions for m in runs])),
            }
        )
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


def condition_at_cbm_stats(metrics: Sequence[EpisodeMetrics]) -> dict[int, float]:
    """Mean condition state at CBM per machine; machines never maintained are absent."""
    by_machine: dict[int, list[int]] = {}
    for m in metrics:
        for machine, cs in m.cbm_conditions:
            by_machine.setdefault(machine, []).append(cs)
    return {machine: float(np.mean(values)) for machine, values in sorted(by_machine.items())}


def cm_timeline(metrics: Sequence[EpisodeMetrics], episode: int) -> list[tuple[int, int]]:
    """(machine, clock) CM events of one episode, sorted by clock."""
    if not 0 <= episode < len(metrics):
        raise IndexError(f"episode {episode} out of range for {len(metrics)} episodes")
    return sorted(metrics[episode].cm_events, key=lambda event: (event[1], event[0]))


def late_cm_count(metrics: Sequence[EpisodeMetrics], line_cfg: LineConfig, fraction: float = 0.25) -> float:
    """Mean number of CM events per episode in the final `fraction` of t_sim."""
    if not metrics:
        return 0.0
    start = line_cfg.t_sim * (1.0 - fraction)
    return float(np.mean([sum(1 for _, clock in m.cm_events if clock >= start) for m in metrics]))


def episodes_frame(metrics: Mapping[str, Sequence[EpisodeMetrics]] | Sequence[EpisodeMetrics]) -> pd.DataFrame:
    rows = [
        {
            "episode": m.episode,
            "policy": m.policy,
            "parts": m.produced_parts,
            "cost": m.maintenance_cost,
            "cbm": m.cbm_count,
            "cm": m.cm_count,
            "idle": m.idle_count,
        }
        for runs in _group(metrics).values()
        for m in runs
    ]
    return pd.DataFrame(rows, columns=EPISODE_COLUMNS)


def machines_frame(metrics: Mapping[str, Sequence[EpisodeMetrics]] | Sequence[EpisodeMetrics]) -> pd.DataFrame:
    rows = []
    for name, runs in _group(metrics).items():
        if not runs:
            continue
        counts = np.mean([m.per_machine_cbm for m in runs], axis=0)
        conditions = condition_at_cbm_stats(runs)
        for k, count in enumerate(counts, start=1):
            rows.append(
                {
                    "policy": name,
                    "machine": k,
                    "cbm_count_mean": float(count),
                    "cbm_condition_mean": conditions.get(k, np.nan),
                }
            )
    return pd.DataFrame(rows, columns=MACHINE_COLUMNS)


def cm_timeline_frame(metrics: Mapping[str, Sequence[EpisodeMetrics]] | Sequence[EpisodeMetrics]) -> pd.DataFrame:
    rows = [
        {"episode": m.episode, "policy": m.policy, "machine": machine, "clock": clock}
        for runs in _group(metrics).values()
        for m in runs
        for machine, clock in sorted(m.cm_events, key=lambda event: (event[1], event[0]))
    ]
    return pd.DataFrame(rows, columns=CM_TIMELINE_COLUMNS)


def trace_frame(metrics: EpisodeMetrics, num_machines: int) -> pd.DataFrame:
    columns = ["episode", "policy", "clock", "action", "kind"] + [f"cs_{k}" for k in range(1, num_machines + 1)]
    rows = [
        [metrics.episode, metrics.policy, record.clock, record.action, record.kind, *record.conditions]
        for record in metrics.trace or []
    ]
    return pd.DataFrame(rows, columns=columns)


def write_evaluation_tables(
    out_dir: str | Path,
    metrics: Mapping[str, Sequence[EpisodeMetrics]],
    line_cfg: LineConfig,
) -> dict[str, Path]:
    """Write the per-episode, per-machine, CM timeline, summary and decision trace CSVs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "episodes": out_dir / "episodes.csv",
        "machines": out_dir / "machines.csv",
        "cm_timeline": out_dir / "cm_timeline.csv",
        "summary": out_dir / "summary.csv",
    }
    episodes_frame(metrics).to_csv(paths["episodes"], index=False)
    machines_frame(metrics).to_csv(paths["machines"], index=False)
    cm_timeline_frame(metrics).to_csv(paths["cm_timeline"], index=False)
    summarize(metrics, line_cfg).to_csv(paths["summary"], index=False)

    traces = [trace_frame(runs[0], line_cfg.num_machines) for runs in metrics.values() if runs and runs[0].trace is not None]
    if traces:
        paths["decision_trace"] = out_dir / "decision_trace.csv"
        pd.concat(traces, ignore_index=True).to_csv(paths["decision_trace"], index=False)
    return paths
