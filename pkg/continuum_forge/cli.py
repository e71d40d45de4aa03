"""
CONTINUUM-FORGE — CLI
Click command group: train, evaluate, compare, scenario, oracle, explain, export-plan, dashboard.
"""

from __future__ import annotations
import functools
import json
import logging
from contextlib import contextmanager
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Optional

import click
import numpy as np
from rich.markup import escape
from rich.progress import BarColumn, Progress, TextColumn, TimeElapsedColumn
from rich.table import Table

from . import __version__
from .agents import RL_AGENTS, SCHEDULERS, heuristic_place, load_agent, train_dqn, train_ppo
from .app_graph import AppGraph
from .console import console, err_console, setup_logging
from .env import CEEnv
from .errors import ConfigError, ForgeError
from .experiments import compare_schedulers, evaluate_agent
from .harness import plot_frame, run_scenarios
from .latency import end_to_end
from .models import DqnConfig, EnvConfig, PpoConfig
from .oracle import DEFAULT_LIMIT, optimal
from .planner import Planner, export_plan, load_placement
from .presets import resolve_app, resolve_scenario, resolve_topology
from .topology import Topology
from .workbench import Workbench

log = logging.getLogger(__name__)

ProgressFn = Callable[[str, float], None]


# ── Plumbing ─────────────────────────────────────────────────

def forge_command(fn):
    """Turn ForgeError into a red one-liner and the error's exit code."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ForgeError as e:
            err_console.print(f"[bold red]✗ {type(e).__name__}[/] {escape(e.message)}")
            if e.diagnostics:
                log.info("diagnostics: %s", e.diagnostics)
            raise click.exceptions.Exit(e.exit_code)

    return wrapper


def model_options(fn):
    fn = click.option("--max-replicas", type=int, default=None, help="Override every service's max_replicas.")(fn)
    fn = click.option("--replicas", type=int, default=None, help="Replicas per service.")(fn)
    fn = click.option("--app", "--preset", "app", default="chain", show_default=True,
                      help="App preset (chain, agg-seq, agg-par) or app JSON file.")(fn)
    fn = click.option("--topology", "--nodes", "topology", default="testbed6", show_default=True,
                      help="Topology preset (testbed6, scale18) or topology JSON file.")(fn)
    return fn


def env_options(fn):
    fn = click.option("--max-steps", type=int, default=None, help="Per-episode step cap.")(fn)
    fn = click.option("--penalty", type=float, default=None, help="Per-move penalty cost.")(fn)
    return fn


def run_options(fn):
    fn = click.option("--force", is_flag=True, help="Overwrite existing outputs.")(fn)
    fn = click.option("--seed", type=int, default=0, show_default=True)(fn)
    return fn


def _load_model(topology: str, app: str, replicas: Optional[int], max_replicas: Optional[int]):
    return resolve_topology(topology), resolve_app(app, replicas=replicas, max_replicas=max_replicas)


def _env_config(penalty: Optional[float], max_steps: Optional[int], **extra) -> EnvConfig:
    values = {"penalty_cost": penalty, "max_steps": max_steps, **extra}
    return EnvConfig(**{k: v for k, v in values.items() if v is not None})


def _int_list(value: str) -> List[int]:
    try:
        return [int(v) for v in value.split(",") if v.strip()]
    except ValueError as e:
        raise click.BadParameter(f"expected comma-separated integers, got '{value}'") from e


@contextmanager
def _progress(title: str) -> Iterator[ProgressFn]:
    with Progress(
        TextColumn("[bold cyan]{task.description}"),
        BarColumn(),
        TextColumn("{task.percentage:>5.1f}%"),
        TextColumn("[dim]{task.fields[note]}"),
        TimeElapsedColumn(),
        console=err_console,
        transient=True,
    ) as progress:
        task = progress.add_task(title, total=1.0, note="")

        def on_progress(message: str, fraction: float) -> None:
            progress.update(task, completed=fraction, note=message)

        yield on_progress


def _print_table(title: str, frame, floats: str = "{:.2f}") -> None:
    table = Table(title=title, header_style="bold cyan")
    for column in frame.columns:
        table.add_column(str(column), justify="right" if frame[column].dtype.kind in "if" else "left")
    for row in frame.itertuples(index=False):
        table.add_row(*[floats.format(v) if isinstance(v, float) else str(v) for v in row])
    console.print(table)


# ── Group ────────────────────────────────────────────────────

@click.group()
@click.option("-v", "--verbose", count=True, help="-v for INFO, -vv for DEBUG logging.")
@click.version_option(__version__, prog_name="continuum-forge")
def cli(verbose: int) -> None:
    """Microservice rescheduling workbench for the cloud–edge continuum."""
    setup_logging(verbose)


# ── train ────────────────────────────────────────────────────

@cli.command()
@click.option("--agent", type=click.Choice(RL_AGENTS), default="ppo", show_default=True)
@model_options
@env_options
@run_options
@click.option("--steps", type=int, default=None, help="Total environment steps.")
@click.option("--hyperparams", type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON file with PPO/DQN hyperparameters.")
@click.option("--s-max", type=int, default=20, show_default=True, help="Max instances the policy can address.")
@click.option("--no-mask", is_flag=True, help="Train without action masking (invalid actions penalised).")
@click.option("--trajectory", is_flag=True, help="Also write trajectory.jsonl.")
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), required=True)
@forge_command
def train(agent, topology, app, replicas, max_replicas, penalty, max_steps, seed, force,
          steps, hyperparams, s_max, no_mask, trajectory, workers, out) -> None:
    """Train a PPO or DQN rescheduling policy."""
    topo, graph = _load_model(topology, app, replicas, max_replicas)
    raw = json.loads(Path(hyperparams).read_text(encoding="utf-8")) if hyperparams else {}
    if steps is not None:
        raw["total_steps"] = steps
    try:
        config = PpoConfig.model_validate(raw) if agent == "ppo" else DqnConfig.model_validate(raw)
    except ValueError as e:
        raise ConfigError(f"invalid {agent} hyperparameters\n{e}") from e
    if workers > 1:
        log.warning("training uses a single rollout worker; --workers %d ignored", workers)

    bench = Workbench(out, force)
    outputs = ["checkpoint.npz", "curve.csv", "timing.csv", "stats.json", "manifest.json"]
    if trajectory:
        outputs.append("trajectory.jsonl")
    bench.guard(outputs)
    bench.ensure_dir()
    env_cfg = _env_config(penalty, max_steps, s_max=s_max, masking=not no_mask, seed=seed)
    traj = bench.register("trajectory.jsonl") if trajectory else None
    envs: List[CEEnv] = []

    def factory() -> CEEnv:
        env = CEEnv(graph, topo, env_cfg, trajectory_path=traj)
        envs.append(env)
        return env

    trainer = train_ppo if agent == "ppo" else train_dqn
    with _progress(f"train {agent}") as on_progress:
        model, stats = trainer(factory, config, seed, on_progress, checkpoint_path=bench.register)
    for env in envs:
        env.close()

    model.save(bench.register("checkpoint.npz"))
    bench.write_csv("curve.csv", stats.curve_frame())
    bench.write_csv("timing.csv", stats.timing_frame())
    bench.write_json("stats.json", {
        "agent": agent,
        "steps": stats.steps,
        "updates": stats.updates,
        "episodes": len(stats.episode_rewards),
        "final_moving_average": stats.moving_average[-1] if stats.moving_average else None,
    })
    manifest = bench.write_manifest(
        "train",
        {"agent": agent, "steps": config.total_steps, "penalty": env_cfg.penalty_cost,
         "max_steps": env_cfg.max_steps, "replicas": replicas, "s_max": s_max, "masking": not no_mask},
        {"topology": topology, "app": app},
        seed,
    )
    console.print(f"[green]✓[/] {agent} trained for {stats.steps:,} steps, "
                  f"{len(stats.episode_rewards):,} episodes → {bench.root}  [dim]{manifest.artifact_hash[:12]}[/]")


# ── evaluate ─────────────────────────────────────────────────

@cli.command()
@click.option("--checkpoint", type=click.Path(dir_okay=False), required=True)
@model_options
@env_options
@run_options
@click.option("--episodes", type=int, default=100, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), default=None)
@forge_command
def evaluate(checkpoint, topology, app, replicas, max_replicas, penalty, max_steps, seed, force, episodes, out) -> None:
    """Greedy rollouts of a checkpoint from random initial placements."""
    topo, graph = _load_model(topology, app, replicas, max_replicas)
    agent = load_agent(checkpoint)
    frame, summary = evaluate_agent(agent, graph, topo, episodes, seed, _env_config(penalty, max_steps))

    table = Table(title=f"{agent.kind} on {graph.name}", header_style="bold cyan", show_header=False)
    for key, value in summary.items():
        table.add_row(key, f"{value:.3f}")
    console.print(table)
    if out:
        bench = Workbench(out, force)
        bench.guard(["evaluation.csv", "evaluation.json", "manifest.json"])
        bench.write_csv("evaluation.csv", frame)
        bench.write_json("evaluation.json", summary)
        bench.write_manifest("evaluate", {"episodes": episodes, "replicas": replicas},
                             {"checkpoint": checkpoint, "topology": topology, "app": app}, seed)


# ── compare ──────────────────────────────────────────────────

@cli.command()
@click.option("--topology", "--nodes", "topology", default="testbed6", show_default=True)
@click.option("--app", "--preset", "app", default="chain", show_default=True)
@click.option("--schedulers", default=",".join(SCHEDULERS), show_default=True,
              help=f"Comma-separated subset of {', '.join(SCHEDULERS + RL_AGENTS)}.")
@click.option("--replicas", "replicas_list", default="1,3,5", show_default=True,
              help="Comma-separated replicas per service (4 services: 1,3,5 → 4, 12, 20 pods).")
@click.option("--trials", type=int, default=10, show_default=True)
@click.option("--ppo", "ppo_checkpoint", type=click.Path(dir_okay=False), default=None)
@click.option("--dqn", "dqn_checkpoint", type=click.Path(dir_okay=False), default=None)
@env_options
@run_options
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), default=None)
@forge_command
def compare(topology, app, schedulers, replicas_list, trials, ppo_checkpoint, dqn_checkpoint,
            penalty, max_steps, seed, force, workers, out) -> None:
    """Mean simulated D_msa per scheduler and pod configuration."""
    names = [s.strip() for s in schedulers.split(",") if s.strip()]
    counts = _int_list(replicas_list)
    if not counts:
        raise click.BadParameter("at least one replica count is required", param_hint="--replicas")
    topo = resolve_topology(topology)
    graph = resolve_app(app, max_replicas=max(5, *counts))
    bench: Optional[Workbench] = None
    if out:
        bench = Workbench(out, force)
        bench.guard(["comparison.csv", "manifest.json"])
    checkpoints: Dict[str, str] = {k: v for k, v in (("ppo", ppo_checkpoint), ("dqn", dqn_checkpoint)) if v}
    frame = compare_schedulers(graph, topo, names, counts, trials, seed, checkpoints,
                               _env_config(penalty, max_steps), workers)
    _print_table(f"{graph.name} on {topology}", frame)
    if bench:
        bench.write_csv("comparison.csv", frame)
        bench.write_manifest("compare", {"schedulers": names, "replicas": counts, "trials": trials},
                             {"topology": topology, "app": app, **checkpoints}, seed)


# ── scenario ─────────────────────────────────────────────────

@cli.command()
@click.argument("scenarios", nargs=-1, required=True)
@click.option("--topology", "--nodes", "topology", default="testbed6", show_default=True)
@click.option("--checkpoint", type=click.Path(dir_okay=False), default=None,
              help="Rescheduling checkpoint (overrides the scenario's own).")
@click.option("--noise-seed", type=int, default=None, help="Override every scenario's noise seed.")
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--force", is_flag=True)
@click.option("--out", type=click.Path(file_okay=False), required=True)
@forge_command
def scenario(scenarios, topology, checkpoint, noise_seed, workers, force, out) -> None:
    """Run node-failure / traffic-surge scenarios and write their time series."""
    topo = resolve_topology(topology)
    loaded = [resolve_scenario(s) for s in scenarios]
    if noise_seed is not None:
        loaded = [s.model_copy(update={"noise_seed": noise_seed}) for s in loaded]
    bench = Workbench(out, force)
    files = ["series.csv", "plot.csv", "summary.json", "overhead.json"]
    bench.guard([f"{s.name}/{f}" for s in loaded for f in files] + ["manifest.json"])

    results = run_scenarios(loaded, topo, checkpoint, workers)
    table = Table(title="Scenarios", header_style="bold cyan")
    for column in ("scenario", "mean ms", "< SLO", "spikes", "actions", "moved", "churn"):
        table.add_column(column)
    for result in results:
        name = result.scenario
        bench.write_csv(f"{name}/series.csv", result.series.to_frame())
        bench.write_csv(f"{name}/plot.csv", plot_frame(result.series))
        bench.write_json(f"{name}/summary.json", result.summary)
        bench.write_json(f"{name}/overhead.json", result.overhead)
        table.add_row(
            name,
            f"{result.summary.mean:.1f}",
            f"{result.summary.fraction_under_slo:.1%}",
            str(result.summary.spike_count),
            str(result.overhead.actions),
            f"{result.overhead.fraction_moved:.1%}",
            "[red]yes[/]" if result.overhead.churn else "no",
        )
    console.print(table)
    bench.write_manifest("scenario", {"scenarios": list(scenarios), "noise_seed": noise_seed},
                         {"topology": topology, **({"checkpoint": checkpoint} if checkpoint else {})},
                         noise_seed or 0)


# ── oracle ───────────────────────────────────────────────────

@cli.command()
@model_options
@click.option("--limit", type=int, default=DEFAULT_LIMIT, show_default=True)
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--force", is_flag=True)
@click.option("--out", type=click.Path(file_okay=False), default=None)
@forge_command
def oracle(topology, app, replicas, max_replicas, limit, workers, force, out) -> None:
    """Exhaustive optimum D_msa for a small app/topology."""
    topo, graph = _load_model(topology, app, replicas, max_replicas)
    result = optimal(graph, topo, limit, workers)
    click.echo(result.model_dump_json(indent=2))
    if out:
        bench = Workbench(out, force)
        bench.guard(["oracle.json", "manifest.json"])
        bench.write_json("oracle.json", result)
        bench.write_manifest("oracle", {"limit": limit, "replicas": replicas}, {"topology": topology, "app": app})


# ── explain ──────────────────────────────────────────────────

@cli.command()
@model_options
@click.option("--placement", type=click.Path(dir_okay=False), required=True)
@click.option("--kill", "dead", type=int, multiple=True, help="Mark a node dead before checking.")
@click.option("--force", is_flag=True)
@click.option("--out", type=click.Path(file_okay=False), default=None)
@forge_command
def explain(topology, app, replicas, max_replicas, placement, dead, force, out) -> None:
    """Full latency breakdown of one placement."""
    topo, graph = _load_model(topology, app, replicas, max_replicas)
    for node in dead:
        topo.kill(node)
    report = end_to_end(graph, load_placement(placement), topo)
    click.echo(report.model_dump_json(indent=2))
    if out:
        bench = Workbench(out, force)
        bench.guard(["latency.json", "manifest.json"])
        bench.write_json("latency.json", report)
        bench.write_manifest("explain", {"replicas": replicas},
                             {"topology": topology, "app": app, "placement": placement})


# ── export-plan ──────────────────────────────────────────────

@cli.command("export-plan")
@click.option("--checkpoint", type=click.Path(dir_okay=False), required=True)
@model_options
@env_options
@run_options
@click.option("--placement", type=click.Path(dir_okay=False), default=None,
              help="Current placement; default: the default scheduler's placement for --seed.")
@click.option("--out", type=click.Path(file_okay=False), required=True)
@forge_command
def export_plan_cmd(checkpoint, topology, app, replicas, max_replicas, penalty, max_steps,
                    seed, force, placement, out) -> None:
    """Ordered move list a checkpoint proposes for one cluster state."""
    topo, graph = _load_model(topology, app, replicas, max_replicas)
    agent = load_agent(checkpoint)
    bench = Workbench(out, force)
    bench.guard(["plan.json", "manifest.json"])
    current = load_placement(placement) if placement else _default_placement(graph, topo, seed)
    s_max = int(agent.meta().get("s_max", 20))
    planner = Planner(graph, topo, _env_config(penalty, max_steps, s_max=s_max))
    plan = planner.plan(agent, current)
    ok, message = planner.verify(plan)
    if not ok:
        log.warning("plan replay check failed: %s", message)
    export_plan(plan, bench)
    bench.write_manifest("export-plan", {"replicas": replicas, "penalty": penalty, "max_steps": max_steps},
                         {"checkpoint": checkpoint, "topology": topology, "app": app,
                          **({"placement": placement} if placement else {})}, seed)
    console.print(plan.summary())
    console.print(f"[green]✓[/] plan → {bench.path('plan.json')}")


def _default_placement(graph: AppGraph, topology: Topology, seed: int):
    return heuristic_place(graph, topology.clone(), "default", np.random.default_rng(seed))


# ── dashboard ────────────────────────────────────────────────

@cli.command()
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False))
@forge_command
def dashboard(run_dir) -> None:
    """Browse a run directory in the terminal UI."""
    from .app import ForgeApp

    ForgeApp(Path(run_dir)).run()


def main() -> None:
    cli(prog_name="continuum-forge")


if __name__ == "__main__":
    main()
