"""Exception hierarchy shared by the simulator, learners and the CLI."""


class FlowlineError(Exception):
    """Base class for every error raised by flowline_maintenance."""


class ConfigError(FlowlineError, ValueError):
    """Invalid or missing configuration value. `key` names the offending key."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class ContractViolation(FlowlineError, RuntimeError):
    """A caller broke a precondition of an operation."""


class EpisodeFinishedError(ContractViolation):
    """step() was called on an episode that already reached t_sim."""


class StateCapExceeded(FlowlineError):
    """The exhaustive enumeration of an MDP grew beyond the configured cap."""


class ConvergenceError(FlowlineError, RuntimeError):
    """Value iteration did not reach its tolerance within the iteration cap."""


class CheckpointError(FlowlineError):
    """A parameter checkpoint could not be read or has an unknown layout."""
