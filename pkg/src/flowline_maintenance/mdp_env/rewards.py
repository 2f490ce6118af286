from dataclasses import dataclass
from enum import Enum
from typing import Any, Mapping

from flowline_maintenance.errors import ConfigError, ContractViolation
from flowline_maintenance.flowline_sim.simulator import MaintenanceKind

REWARD_KEYS = ("c_cbm", "c_cm", "c_pl", "beta", "reward_mode", "verbatim_sum")


class RewardMode(str, Enum):
    R1 = "R1"
    R2 = "R2"


class Scenario(str, Enum):
    A = "A"  # idle, no machine broken at the next decision point
    B = "B"  # idle, at least one machine broken
    C = "C"  # CBM or CM performed


@dataclass(frozen=True)
class RewardConfig:
    c_cbm: float = 0.5
    c_cm: float = 1.5
    c_pl: float = 0.1
    beta: float = 10.0
    mode: RewardMode = RewardMode.R2
    verbatim_sum: bool = False

    def __post_init__(self):
        for key in ("c_cbm", "c_cm", "c_pl", "beta"):
            value = getattr(self, key)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"invalid value for '{key}': expected number, got {value!r}", key=key)
            if value < 0:
                raise ConfigError(f"invalid value for '{key}': must be >= 0, got {value}", key=key)
        if self.beta <= 0:
            raise ConfigError(f"invalid value for 'beta': must be > 0, got {self.beta}", key="beta")
        try:
            object.__setattr__(self, "mode", RewardMode(self.mode))
        except ValueError as exc:
            raise ConfigError(f"invalid value for 'reward_mode': {self.mode!r}", key="reward_mode") from exc

    def maintenance_cost(self, cbm_count: int, cm_count: int) -> float:
        """Episode cost metric, independent of the reward mode."""
        return self.c_cbm * cbm_count + self.c_cm * cm_count

    def to_dict(self) -> dict:
        return {
            "c_cbm": self.c_cbm,
            "c_cm": self.c_cm,
            "c_pl": self.c_pl,
            "beta": self.beta,
            "reward_mode": self.mode.value,
            "verbatim_sum": self.verbatim_sum,
        }


def reward_config_from_dict(raw: Mapping[str, Any]) -> RewardConfig:
    defaults = RewardConfig()
    verbatim = raw.get("verbatim_sum", False)
    if not isinstance(verbatim, bool):
        raise ConfigError(f"invalid value for 'verbatim_sum': expected boolean, got {verbatim!r}", key="verbatim_sum")
    return RewardConfig(
        c_cbm=raw.get("c_cbm", defaults.c_cbm),
        c_cm=raw.get("c_cm", defaults.c_cm),
        c_pl=raw.get("c_pl", defaults.c_pl),
        beta=raw.get("beta", defaults.beta),
        mode=raw.get("reward_mode", defaults.mode.value),
        verbatim_sum=verbatim,
    )


def classify_scenario(kind: MaintenanceKind | None, breakdown_present: bool) -> Scenario:
    if kind is not None:
        return Scenario.C
    return Scenario.B if breakdown_present else Scenario.A


def reward_r1(pp_before: int, pp_after: int) -> float:
    """Output-only reward: parts produced between two decision points."""
    if pp_after < pp_before:
        raise ContractViolation(f"produced parts decreased from {pp_before} to {pp_after}")
    return float(pp_after - pp_before)


def reward_r2(scenario: Scenario, kind: MaintenanceKind | None, elapsed: int, cfg: RewardConfig) -> float:
    """
    Cost-based reward.

    A -> 0; B -> -beta * c_cbm; C -> -(cost(kind) + c_pl / elapsed), where
    cost is c_cbm for CBM and c_cm for CM, or c_cbm + c_cm when
    `cfg.verbatim_sum` is set.

    Raises:
        ContractViolation: scenario C with elapsed < 1 or without a kind.
    """
    if scenario is Scenario.A:
        return 0.0
    if scenario is Scenario.B:
        return -(cfg.beta * cfg.c_cbm)
    if elapsed < 1:
        raise ContractViolation(f"scenario C needs elapsed >= 1, got {elapsed}")
    if cfg.verbatim_sum:
        cost = cfg.c_cbm + cfg.c_cm
    elif kind is MaintenanceKind.CBM:
        cost = cfg.c_cbm
    elif kind is MaintenanceKind.CM:
        cost = cfg.c_cm
    else:
        raise ContractViolation("scenario C requires a maintenance kind")
    return -(cost + cfg.c_pl / elapsed)
