"""
CONTINUUM-FORGE — Experiments
Scheduler comparison across pod counts and greedy checkpoint evaluation.
"""

from __future__ import annotations
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .agents import RL_AGENTS, SCHEDULERS, Agent, heuristic_place, load_agent, run_episode
from .app_graph import AppGraph, set_all_replicas, total_instances
from .env import CEEnv
from .errors import CheckpointError, ConfigError
from .latency import LatencyModel
from .models import EnvConfig
from .planner import Planner
from .topology import Topology

log = logging.getLogger(__name__)

COMPARE_COLUMNS = [
    "scheduler", "replicas", "pods", "trials",
    "mean_d_msa", "std_d_msa", "mean_actions", "mean_fraction_moved",
]


def _background(topology: Topology, seed: int, replicas: int, trial: int) -> Tuple[Topology, np.random.Generator]:
    """Trial-specific background load; identical for every scheduler in the same trial."""
    rng = np.random.default_rng([seed, replicas, trial])
    topo = topology.clone()
    topo.draw_background(rng)
    return topo, rng


def _compare_cell(
    scheduler: str,
    app: AppGraph,
    topology: Topology,
    replicas: int,
    trials: int,
    seed: int,
    checkpoint: Optional[Union[str, Path]],
    env_config: EnvConfig,
) -> Dict[str, Any]:
    app = set_all_replicas(app, replicas)
    pods = total_instances(app)
    agent: Optional[Agent] = load_agent(checkpoint) if scheduler in RL_AGENTS else None
    d_values: List[float] = []
    actions: List[int] = []
    fractions: List[float] = []
    for trial in range(trials):
        background, rng = _background(topology, seed, replicas, trial)
        deployed = background.clone()
        placement = heuristic_place(app, deployed, "default" if agent else scheduler, rng)
        if agent is None:
            d_values.append(LatencyModel(app, topology).evaluate(placement.assignment))
            continue
        config = env_config.model_copy(update={"s_max": int(agent.meta().get("s_max", env_config.s_max))})
        plan = Planner(app, background, config).plan(agent, placement)
        d_values.append(plan.final_d_msa)
        actions.append(len(plan.moves))
        fractions.append(len({(m.service, m.replica) for m in plan.moves}) / pods)
    return {
        "scheduler": scheduler,
        "replicas": replicas,
        "pods": pods,
        "trials": trials,
        "mean_d_msa": float(np.mean(d_values)),
        "std_d_msa": float(np.std(d_values)),
        "mean_actions": float(np.mean(actions)) if actions else 0.0,
        "mean_fraction_moved": float(np.mean(fractions)) if fractions else 0.0,
    }


def compare_schedulers(
    app: AppGraph,
    topology: Topology,
    schedulers: Sequence[str],
    replicas: Sequence[int],
    trials: int,
    seed: int = 0,
    checkpoints: Optional[Dict[str, Union[str, Path]]] = None,
    env_config: Optional[EnvConfig] = None,
    workers: int = 1,
) -> pd.DataFrame:
    """
    Mean simulated D_msa per (scheduler, replica count). RL schedulers start from the
    default scheduler's placement on the same background and reschedule greedily.
    """
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    checkpoints = checkpoints or {}
    for name in schedulers:
        if name not in SCHEDULERS and name not in RL_AGENTS:
            raise ConfigError(f"unknown scheduler '{name}' (choose from {', '.join(SCHEDULERS + RL_AGENTS)})")
        if name in RL_AGENTS:
            path = checkpoints.get(name)
            if path is None or not Path(path).exists():
                raise CheckpointError(f"scheduler '{name}' needs a checkpoint (missing: {path})")
    env_config = env_config or EnvConfig()
    cells = [(s, r) for r in replicas for s in schedulers]
    args = [
        (s, app, topology, r, trials, seed, checkpoints.get(s), env_config)
        for s, r in cells
    ]
    if workers > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_compare_cell, *zip(*args)))
    else:
        rows = [_compare_cell(*a) for a in args]
    for row in rows:
        log.info("%-14s replicas %d: %.2f ms", row["scheduler"], row["replicas"], row["mean_d_msa"])
    return pd.DataFrame(rows, columns=COMPARE_COLUMNS)


def evaluate_agent(
    agent: Agent,
    app: AppGraph,
    topology: Topology,
    episodes: int,
    seed: int = 0,
    env_config: Optional[EnvConfig] = None,
) -> Tuple[pd.DataFrame, Dict[str, float]]:
    """Greedy episodes from random initial states; per-episode table plus means."""
    if episodes < 1:
        raise ConfigError("episodes must be >= 1")
    config = (env_config or EnvConfig()).model_copy(update={"seed": seed})
    meta = agent.meta()
    if "s_max" in meta:
        config = config.model_copy(update={"s_max": int(meta["s_max"])})
    env = CEEnv(app, topology, config)
    pods = total_instances(app)
    rows = []
    for episode in range(episodes):
        record = run_episode(agent, env, seed=seed + episode)
        rows.append({
            "episode": episode + 1,
            "reward": record.reward,
            "length": record.length,
            "initial_d_msa": record.initial_d_msa,
            "final_d_msa": record.final_d_msa,
            "actions": record.non_idle_actions,
            "fraction_moved": record.fraction_moved(pods),
            "idle_reached": record.idle_reached,
            "invalid": record.invalid,
        })
    frame = pd.DataFrame(rows)
    summary = {
        "episodes": float(episodes),
        "mean_reward": float(frame["reward"].mean()),
        "mean_initial_d_msa": float(frame["initial_d_msa"].mean()),
        "mean_final_d_msa": float(frame["final_d_msa"].mean()),
        "mean_actions": float(frame["actions"].mean()),
        "mean_fraction_moved": float(frame["fraction_moved"].mean()),
        "idle_rate": float(frame["idle_reached"].mean()),
    }
    return frame, summary
