"""
Command-line entry point: `flowline train | evaluate | sweep | oracle`.

Defaults can come from a `.env` file: FLOWLINE_LOG_LEVEL, FLOWLINE_WORKERS
and FLOWLINE_OUT_DIR.
"""

import json
import logging
import os
from contextlib import contextmanager
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import click
from dotenv import load_dotenv

from flowline_maintenance.baseline_policies.policies import policy_from_spec
from flowline_maintenance.baseline_policies.threshold_sweep import Criterion, best_threshold, sweep_threshold
from flowline_maintenance.config import ExperimentConfig, load_config
from flowline_maintenance.ddqn_trainer.trainer import train
from flowline_maintenance.dp_oracle.tabular_mdp import enumerate_mdp
from flowline_maintenance.dp_oracle.value_iteration import compare_policies, policy_frame, q_table_frame, value_iteration
from flowline_maintenance.errors import ConfigError, FlowlineError
from flowline_maintenance.eval_harness.metrics import summarize, write_evaluation_tables
from flowline_maintenance.eval_harness.runner import default_workers, run_episodes
from flowline_maintenance.neural_core.checkpoint import load_checkpoint, save_checkpoint

load_dotenv()

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def package_version() -> str:
    try:
        return version("flowline-maintenance")
    except PackageNotFoundError:
        return "0.0.0+local"


@dataclass
class RunManifest:
    command: str
    config: str
    seed: int
    out_dir: str
    timestamp: str
    version: str

    def write(self) -> Path:
        path = Path(self.out_dir) / "manifest.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(asdict(self), indent=2) + "\n")
        return path


class ConfigUsageError(click.ClickException):
    exit_code = 2


@contextmanager
def _exit_codes():
    """ConfigError -> exit 2, other package and I/O errors -> exit 1."""
    try:
        yield
    except ConfigError as exc:
        raise ConfigUsageError(str(exc)) from exc
    except (FlowlineError, OSError) as exc:
        raise click.ClickException(str(exc)) from exc


def _prepare(command: str, config_path: str, out: str | None, seed: int | None, **overrides) -> tuple[ExperimentConfig, Path]:
    cfg = load_config(config_path).with_overrides(seed=seed, **overrides)
    out_dir = Path(out) if out else Path(os.getenv("FLOWLINE_OUT_DIR", "runs")) / command
    manifest = RunManifest(
        command=command,
        config=str(config_path),
        seed=cfg.line.seed,
        out_dir=str(out_dir),
        timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        version=package_version(),
    )
    manifest.write()
    logger.info("[CLI] %s: config=%s seed=%d out=%s", command, config_path, cfg.line.seed, out_dir)
    return cfg, out_dir


config_option = click.option(
    "--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False), help="JSON run configuration."
)
out_option = click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")
seed_option = click.option("--seed", type=click.IntRange(min=0), default=None, help="Override the configured seed.")


@click.group()
@click.option(
    "--log-level",
    envvar="FLOWLINE_LOG_LEVEL",
    default="INFO",
    show_default=True,
    type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
)
def cli(log_level: str):
    """Flow line maintenance scheduling: DDQN training, baselines and an exact oracle."""
    logging.basicConfig(level=log_level.upper(), format=LOG_FORMAT)


@cli.command("train")
@config_option
@out_option
@seed_option
@click.option("--episodes", type=click.IntRange(min=0), default=None, help="Override training.episodes.")
@click.option("--reward-mode", type=click.Choice(["R1", "R2"]), default=None, help="Override reward_mode.")
def cmd_train(config_path, out, seed, episodes, reward_mode):
    """Train a DDQN scheduler; writes checkpoint.pt and training_log.csv."""
    with _exit_codes():
        cfg, out_dir = _prepare("train", config_path, out, seed, episodes=episodes, reward_mode=reward_mode)
        result = train(cfg.line, cfg.reward, cfg.training, seed=cfg.line.seed, progress=True)

        metadata = {
            "line": cfg.line.to_dict(),
            "reward": cfg.reward.to_dict(),
            "training": cfg.training.to_dict(),
            "best_episode": result.best_episode,
            "version": package_version(),
        }
        save_checkpoint(out_dir / "checkpoint.pt", result.best_network, metadata)
        save_checkpoint(out_dir / "final_checkpoint.pt", result.final_network, metadata)
        result.log.to_csv(out_dir / "training_log.csv")
        result.log.to_diagnostics_csv(out_dir / "training_diagnostics.csv")
        click.echo(f"best smoothed reward {result.best_smoothed_reward:.3f} at episode {result.best_episode}")


@cli.command("evaluate")
@config_option
@out_option
@seed_option
@click.option(
    "--policy",
    "policies",
    multiple=True,
    default=("random",),
    show_default=True,
    help="`random`, `fifo:<n_c>` or a checkpoint path; repeat to compare on paired seeds.",
)
@click.option("--episodes", type=click.IntRange(min=1), default=None, help="Override evaluation.episodes.")
@click.option("--workers", envvar="FLOWLINE_WORKERS", type=click.IntRange(min=1), default=None, help="Process pool size.")
def cmd_evaluate(config_path, out, seed, policies, episodes, workers):
    """Evaluate policies over seeded episodes and write the metric CSVs."""
    with _exit_codes():
        cfg, out_dir = _prepare("evaluate", config_path, out, seed, eval_episodes=episodes)
        workers = workers or default_workers()

        metrics = {}
        for spec in policies:
            policy = policy_from_spec(spec, cfg.line)
            name = policy.name if policy.name not in metrics else f"{policy.name}#{len(metrics)}"
            policy.name = name
            metrics[name] = run_episodes(
                policy,
                cfg.line,
                cfg.reward,
                cfg.evaluation.episodes,
                cfg.eval_base_seed,
                workers=workers,
                record_trace=True,
            )

        write_evaluation_tables(out_dir, metrics, cfg.line)
        click.echo(summarize(metrics, cfg.line).to_string(index=False))


@cli.command("sweep")
@config_option
@out_option
@seed_option
@click.option(
    "--criterion",
    type=click.Choice([c.value for c in Criterion]),
    default=Criterion.MAX_PARTS.value,
    show_default=True,
)
@click.option("--episodes", type=click.IntRange(min=1), default=None, help="Episodes per threshold.")
@click.option("--workers", envvar="FLOWLINE_WORKERS", type=click.IntRange(min=1), default=None, help="Process pool size.")
def cmd_sweep(config_path, out, seed, criterion, episodes, workers):
    """Evaluate FIFO for every threshold 0..n and report the best one."""
    with _exit_codes():
        cfg, out_dir = _prepare("sweep", config_path, out, seed, eval_episodes=episodes)
        result = sweep_threshold(
            cfg.line,
            cfg.reward,
            criterion,
            cfg.evaluation.episodes,
            cfg.eval_base_seed,
            workers=workers or default_workers(),
        )
        result.to_csv(out_dir / "sweep.csv")
        click.echo(f"best threshold ({criterion}): {result.best_threshold}")
        for other in Criterion:
            if other.value != criterion:
                click.echo(f"best threshold ({other.value}): {best_threshold(result.table, other)}")


@cli.command("oracle")
@config_option
@out_option
@seed_option
@click.option(
    "--compare-checkpoint",
    type=click.Path(dir_okay=False),
    default=None,
    help="Report the greedy-action agreement of this checkpoint with the oracle.",
)
def cmd_oracle(config_path, out, seed, compare_checkpoint):
    """Solve a small instance exactly; writes q_table.csv and policy.csv."""
    with _exit_codes():
        cfg, out_dir = _prepare("oracle", config_path, out, seed)
        mdp = enumerate_mdp(
            cfg.line,
            cfg.reward,
            horizon_mode=cfg.oracle.horizon_mode,
            gamma=cfg.oracle.gamma,
            discount_mode=cfg.oracle.discount_mode,
            state_cap=cfg.oracle.state_cap,
        )
        result = value_iteration(mdp, tol=cfg.oracle.tol)
        q_table_frame(result).to_csv(out_dir / "q_table.csv", index=False)
        policy_frame(mdp, result, cfg.line).to_csv(out_dir / "policy.csv", index=False)
        click.echo(f"{mdp.num_states} states, converged after {result.iterations} sweeps")

        if compare_checkpoint:
            net, _ = load_checkpoint(compare_checkpoint)
            agreement = compare_policies(result, net, mdp, cfg.line)
            click.echo(f"agreement: {agreement:.4f}")


if __name__ == "__main__":
    cli()
