from dataclasses import dataclass, field
from typing import Any, Mapping

from flowline_maintenance.errors import ConfigError

LINE_KEYS = ("machines", "n", "n_c", "t_cbm", "t_cm", "t_idle", "t_sim", "seed")
REQUIRED_LINE_KEYS = ("machines", "n", "t_cbm", "t_cm", "t_sim", "seed")
MACHINE_KEYS = ("p", "d", "b")


def _require_int(value: Any, key: str, minimum: int, where: str = "") -> int:
    # bool is an int subclass; a JSON `true` is never a valid step count
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"invalid value for '{key}'{where}: expected integer, got {value!r}", key=key)
    if value < minimum:
        raise ConfigError(f"invalid value for '{key}'{where}: must be >= {minimum}, got {value}", key=key)
    return value


@dataclass(frozen=True)
class MachineConfig:
    """
    Static description of one machine of the line.

    Args:
        p: process time of one part in simulation steps (>= 1).
        d: probability of advancing one condition state per operating step.
        b: capacity of the machine's upstream buffer in parts (>= 1).
    """

    p: int
    d: float
    b: int

    def __post_init__(self):
        _require_int(self.p, "p", 1)
        _require_int(self.b, "b", 1)
        if isinstance(self.d, bool) or not isinstance(self.d, (int, float)):
            raise ConfigError(f"invalid value for 'd': expected number, got {self.d!r}", key="d")
        if not 0.0 <= self.d <= 1.0:
            raise ConfigError(f"invalid value for 'd': must lie in [0, 1], got {self.d}", key="d")


@dataclass(frozen=True)
class LineConfig:
    """
    Flow line: ordered machines, degradation chain length and maintenance durations.

    Machine indices are 0-based inside the package; action codes and every
    reported table use 1-based machine numbers.
    """

    machines: tuple[MachineConfig, ...]
    n: int
    t_cbm: int
    t_cm: int
    t_sim: int
    seed: int
    n_c: int = 0
    t_idle: int = 1
    # informational only, filled by the loader
    name: str = field(default="line", compare=False)

    def __post_init__(self):
        if not self.machines:
            raise ConfigError("invalid value for 'machines': at least one machine is required", key="machines")
        object.__setattr__(self, "machines", tuple(self.machines))
        _require_int(self.n, "n", 1)
        _require_int(self.n_c, "n_c", 0)
        if self.n_c >= self.n:
            raise ConfigError(f"invalid value for 'n_c': must be < n={self.n}, got {self.n_c}", key="n_c")
        _require_int(self.t_cbm, "t_cbm", 1)
        _require_int(self.t_cm, "t_cm", 1)
        _require_int(self.t_idle, "t_idle", 1)
        _require_int(self.t_sim, "t_sim", 1)
        _require_int(self.seed, "seed", 0)
        if self.seed >= 2**64:
            raise ConfigError("invalid value for 'seed': must fit in 64 bits", key="seed")

    @property
    def num_machines(self) -> int:
        return len(self.machines)

    @property
    def p_max(self) -> int:
        return max(m.p for m in self.machines)

    @property
    def rho_max(self) -> float:
        """Ideal output without degradation: t_sim / p_max."""
        return self.t_sim / self.p_max

    def with_overrides(self, **changes) -> "LineConfig":
        values = {
            "machines": self.machines,
            "n": self.n,
            "t_cbm": self.t_cbm,
            "t_cm": self.t_cm,
            "t_sim": self.t_sim,
            "seed": self.seed,
            "n_c": self.n_c,
            "t_idle": self.t_idle,
            "name": self.name,
        }
        values.update(changes)
        return LineConfig(**values)

    def to_dict(self) -> dict:
        return {
            "machines": [{"p": m.p, "d": m.d, "b": m.b} for m in self.machines],
            "n": self.n,
            "n_c": self.n_c,
            "t_cbm": self.t_cbm,
            "t_cm": self.t_cm,
            "t_idle": self.t_idle,
            "t_sim": self.t_sim,
            "seed": self.seed,
        }


def line_config_from_dict(raw: Mapping[str, Any], name: str = "line") -> LineConfig:
    """
    Build a LineConfig from the JSON document keys.

    Raises:
        ConfigError: a required key is missing or a value is out of range.
    """
    for key in REQUIRED_LINE_KEYS:
        if key not in raw:
            raise ConfigError(f"missing key: {key}", key=key)

    machines_raw = raw["machines"]
    if not isinstance(machines_raw, list):
        raise ConfigError("invalid value for 'machines': expected a list", key="machines")

    machines = []
    for idx, entry in enumerate(machines_raw):
        if not isinstance(entry, Mapping):
            raise ConfigError(f"invalid value for 'machines'[{idx}]: expected an object", key="machines")
        for key in MACHINE_KEYS:
            if key not in entry:
                raise ConfigError(f"missing key: {key} (machines[{idx}])", key=key)
        try:
            machines.append(MachineConfig(p=entry["p"], d=entry["d"], b=entry["b"]))
        except ConfigError as exc:
            raise ConfigError(f"{exc} (machines[{idx}])", key=exc.key) from exc

    return LineConfig(
        machines=tuple(machines),
        n=raw["n"],
        n_c=raw.get("n_c", 0),
        t_cbm=raw["t_cbm"],
        t_cm=raw["t_cm"],
        t_idle=raw.get("t_idle", 1),
        t_sim=raw["t_sim"],
        seed=raw["seed"],
        name=name,
    )
