"""Rescheduling agents and initial-placement heuristics."""

from __future__ import annotations
from pathlib import Path
from typing import Union

from ..errors import CheckpointError
from ..nnet import load_checkpoint
from .common import Agent, EpisodeRecord, check_compatible, reschedule, run_episode
from .dqn import DqnAgent, train_dqn
from .heuristics import SCHEDULERS, heuristic_place, place_instances
from .ppo import PpoAgent, gae, ppo_act, train_ppo

RL_AGENTS = ("ppo", "dqn")


def load_agent(path: Union[str, Path]) -> Agent:
    """Load a PPO or DQN checkpoint, whichever the header says it holds."""
    nets, meta = load_checkpoint(path)
    kind = meta.get("agent")
    if kind == "ppo":
        return PpoAgent.from_checkpoint(nets, meta)
    if kind == "dqn":
        return DqnAgent.from_checkpoint(nets, meta)
    raise CheckpointError(f"{path}: unknown agent kind '{kind}'")


__all__ = [
    "Agent", "DqnAgent", "EpisodeRecord", "PpoAgent", "RL_AGENTS", "SCHEDULERS",
    "check_compatible", "gae", "heuristic_place", "load_agent", "place_instances",
    "ppo_act", "reschedule", "run_episode", "train_dqn", "train_ppo",
]
