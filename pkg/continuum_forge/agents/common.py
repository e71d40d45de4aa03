"""
CONTINUUM-FORGE — Agent plumbing
Checkpoint compatibility, greedy rollouts and the reschedule operation.
"""

from __future__ import annotations
import logging
from typing import Any, Dict, List, Optional, Protocol

import numpy as np
from pydantic import BaseModel, Field

from ..env import CEEnv
from ..errors import CheckpointError
from ..models import PlanMove, ReschedulePlan

log = logging.getLogger(__name__)


class Agent(Protocol):
    kind: str
    obs_size: int
    n_actions: int

    def greedy(self, obs: np.ndarray, mask: np.ndarray) -> int: ...

    def meta(self) -> Dict[str, Any]: ...


def env_meta(env: CEEnv) -> Dict[str, Any]:
    return {
        "obs_size": int(env.observation_space.shape[0]),
        "n_actions": int(env.n_actions),
        "s_max": env.s_max,
        "n_nodes": env.n_nodes,
    }


def check_compatible(meta: Dict[str, Any], env: CEEnv) -> None:
    expected = env_meta(env)
    for key in ("obs_size", "n_actions", "s_max", "n_nodes"):
        if key in meta and meta[key] != expected[key]:
            raise CheckpointError(
                f"checkpoint was trained with {key}={meta[key]}, environment has {expected[key]}",
                diagnostics={"checkpoint": {k: meta.get(k) for k in expected}, "env": expected},
            )


class EpisodeRecord(BaseModel):
    reward: float = 0.0
    length: int = 0
    initial_d_msa: float
    final_d_msa: float
    actions: List[int] = Field(default_factory=list)
    moved_slots: List[int] = Field(default_factory=list)
    idle_reached: bool = False
    truncated: bool = False
    invalid: bool = False

    @property
    def non_idle_actions(self) -> int:
        return len(self.moved_slots)

    def fraction_moved(self, active: int) -> float:
        return len(set(self.moved_slots)) / active if active else 0.0


def run_episode(
    agent: Agent,
    env: CEEnv,
    *,
    seed: Optional[int] = None,
    options: Optional[Dict[str, Any]] = None,
) -> EpisodeRecord:
    """Greedy rollout to Idle, an invalid action or the step limit."""
    check_compatible(agent.meta(), env)
    obs, info = env.reset(seed=seed, options=options)
    record = EpisodeRecord(initial_d_msa=info["d_msa"], final_d_msa=info["d_msa"])
    while True:
        action = agent.greedy(obs, info["action_mask"])
        obs, reward, terminated, truncated, info = env.step(action)
        record.reward += reward
        record.length += 1
        record.actions.append(action)
        if "moved" in info:
            record.moved_slots.append(env.decode(action)[0])
        if terminated or truncated:
            record.idle_reached = action == env.idle_action
            record.invalid = not info["legal"]
            record.truncated = truncated
            break
    record.final_d_msa = env.d_msa
    return record


def reschedule(agent: Agent, env: CEEnv, options: Optional[Dict[str, Any]] = None) -> ReschedulePlan:
    """Greedy policy rollout from a given (or freshly drawn) state, as an ordered move list."""
    check_compatible(agent.meta(), env)
    obs, info = env.reset(options=options)
    initial = env.placement
    initial_d = env.d_msa
    names = env.app.names
    moves: List[PlanMove] = []
    truncated = False
    while True:
        action = agent.greedy(obs, info["action_mask"])
        move = env.decode(action)
        source = int(env.slot_node[move[0]]) if move else -1
        obs, _, terminated, truncated, info = env.step(action)
        if "moved" in info:
            service, replica = env.slots[move[0]]
            moves.append(PlanMove(
                step=len(moves) + 1,
                service=names[service],
                replica=replica,
                source=source,
                target=move[1],
                d_msa_before=info["d_msa_before"],
                d_msa_after=info["d_msa_after"],
            ))
        if terminated or truncated:
            break
    if truncated:
        log.warning("rescheduling stopped at the step limit (%d) before Idle", env.config.max_steps)
    return ReschedulePlan(
        app=env.app.name,
        initial_placement=initial,
        final_placement=env.placement,
        initial_d_msa=initial_d,
        final_d_msa=env.d_msa,
        moves=moves,
        idle_reached=not truncated and action == env.idle_action,
        truncated=truncated,
    )
