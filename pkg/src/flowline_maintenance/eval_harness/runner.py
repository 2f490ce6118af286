import logging
import os
from multiprocessing import Pool

from tqdm import tqdm

from flowline_maintenance.baseline_policies.policies import Policy
from flowline_maintenance.eval_harness.metrics import DecisionRecord, EpisodeMetrics
from flowline_maintenance.flowline_sim.line_config import LineConfig
from flowline_maintenance.flowline_sim.simulator import MaintenanceKind
from flowline_maintenance.mdp_env.environment import IDLE, FlowLineEnv
from flowline_maintenance.mdp_env.rewards import RewardConfig

logger = logging.getLogger(__name__)


def default_workers() -> int:
    return os.cpu_count() or 1


def run_episode(
    policy: Policy,
    line_cfg: LineConfig,
    reward_cfg: RewardConfig,
    episode: int,
    seed: int,
    record_trace: bool = False,
) -> EpisodeMetrics:
    """Play one full episode of `policy` with simulator seed `seed`."""
    if policy.env_n_c is not None and policy.env_n_c != line_cfg.n_c:
        line_cfg = line_cfg.with_overrides(n_c=policy.env_n_c)
    env = FlowLineEnv(line_cfg, reward_cfg)
    obs = env.reset(seed=seed)
    policy.reset(seed)

    per_machine_cbm = [0] * line_cfg.num_machines
    cbm_conditions = []
    cm_events = []
    idle = 0
    total_reward = 0.0
    trace = [] if record_trace else None

    while not env.terminal:
        conditions = tuple(env.state.conditions())
        action = policy.act(obs, env.state)
        transition = env.step(action)
        total_reward += transition.reward

        if transition.kind is MaintenanceKind.CBM:
            per_machine_cbm[action - 1] += 1
            cbm_conditions.append((action, conditions[action - 1]))
        elif transition.kind is MaintenanceKind.CM:
            cm_events.append((action, transition.clock))
        else:
            idle += 1
        if trace is not None:
            kind = transition.kind.value if transition.kind is not None else "idle"
            trace.append(DecisionRecord(transition.clock, action, kind, conditions))
        obs = transition.next_obs

    cbm = sum(per_machine_cbm)
    return EpisodeMetrics(
        episode=episode,
        policy=policy.name,
        produced_parts=env.state.produced_parts,
        maintenance_cost=reward_cfg.maintenance_cost(cbm, len(cm_events)),
        cbm_count=cbm,
        cm_count=len(cm_events),
        idle_count=idle,
        per_machine_cbm=per_machine_cbm,
        cbm_conditions=cbm_conditions,
        cm_events=cm_events,
        decisions=env.decisions,
        total_reward=total_reward,
        trace=trace,
    )


def run_episodes(
    policy: Policy,
    line_cfg: LineConfig,
    reward_cfg: RewardConfig,
    n_episodes: int,
    base_seed: int,
    workers: int = 1,
    record_trace: bool = False,
    progress: bool = False,
) -> list[EpisodeMetrics]:
    """
    Evaluate a policy over `n_episodes` independent episodes.

    Episode k uses seed base_seed + k for both the simulator and the policy,
    so results do not depend on how episodes are spread over workers.

    Args:
        workers: size of the process pool; 1 runs in this process.
        record_trace: keep the decision trace of the first episode.
    """
    if n_episodes <= 0:
        return []
    jobs = [
        (policy, line_cfg, reward_cfg, k, base_seed + k, record_trace and k == 0)
        for k in range(n_episodes)
    ]
    logger.info("[Eval] %s: %d episodes from seed %d on %d worker(s)", policy.name, n_episodes, base_seed, workers)

    if workers <= 1 or n_episodes == 1:
        return [run_episode(*job) for job in tqdm(jobs, desc=f"[Eval] {policy.name}", disable=not progress)]
    with Pool(processes=min(workers, n_episodes)) as pool:
        return pool.starmap(run_episode, jobs)
