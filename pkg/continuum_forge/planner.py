"""
CONTINUUM-FORGE — Planner
Rescheduling plans: build (ghost run on a private env), export, replay, execute.
Nothing touches the caller's topology until execute_plan().
"""

from __future__ import annotations
import json
import logging
from pathlib import Path
from typing import Callable, Optional, Tuple, Union

from pydantic import ValidationError

from .agents import Agent, reschedule
from .app_graph import AppGraph
from .env import CEEnv
from .errors import CapacityError, ConfigError, PlacementError
from .models import EnvConfig, Placement, ReschedulePlan
from .topology import Topology
from .workbench import Workbench

log = logging.getLogger(__name__)

PLAN_FILE = "plan.json"


class Planner:
    """Builds and applies ReschedulePlans for one app on one background topology."""

    def __init__(self, app: AppGraph, topology: Topology, env_config: Optional[EnvConfig] = None) -> None:
        self.app = app
        # Background-only topology: the app's own requests are not committed here.
        self.topology = topology
        self.env_config = env_config or EnvConfig()

    def _env(self) -> CEEnv:
        return CEEnv(self.app, self.topology, self.env_config)

    def _options(self, placement: Placement) -> dict:
        return {"topology": self.topology, "placement": placement}

    # ── Build ────────────────────────────────────────────────

    def plan(self, agent: Agent, placement: Placement) -> ReschedulePlan:
        plan = reschedule(agent, self._env(), self._options(placement))
        log.info("plan for %s: %d moves, %.2f -> %.2f ms",
                 self.app.name, len(plan.moves), plan.initial_d_msa, plan.final_d_msa)
        return plan

    # ── Replay ───────────────────────────────────────────────

    def replay_plan(self, plan: ReschedulePlan) -> ReschedulePlan:
        """Re-apply the plan's moves through a fresh env; returns what actually happened."""
        env = self._env()
        env.reset(options=self._options(plan.initial_placement))
        moves = []
        for move in plan.moves:
            service = self.app.service_id(move.service)
            action = env.encode(env.slot_of(service, move.replica), move.target)
            if not env.legal_mask()[action]:
                raise PlacementError(f"plan step {move.step} is not applicable: {move.service}[{move.replica}] -> {move.target}")
            _, _, _, truncated, info = env.step(action)
            moves.append(move.model_copy(update={
                "d_msa_before": info["d_msa_before"],
                "d_msa_after": info["d_msa_after"],
            }))
            if truncated:
                break
        return plan.model_copy(update={
            "moves": moves,
            "final_placement": env.placement,
            "final_d_msa": env.d_msa,
            "initial_d_msa": env.latency.evaluate(plan.initial_placement.assignment),
        })

    def verify(self, plan: ReschedulePlan, tolerance: float = 1e-9) -> Tuple[bool, str]:
        try:
            replayed = self.replay_plan(plan)
        except PlacementError as e:
            return False, e.message
        if replayed.final_placement != plan.final_placement:
            return False, "replay ends in a different placement"
        if abs(replayed.final_d_msa - plan.final_d_msa) > tolerance:
            return False, f"replay D_msa {replayed.final_d_msa:.6f} != planned {plan.final_d_msa:.6f}"
        return True, f"plan replays to {plan.final_d_msa:.2f} ms"

    # ── Execute ──────────────────────────────────────────────

    def execute_plan(
        self,
        plan: ReschedulePlan,
        cluster: Topology,
        on_progress: Optional[Callable[[str, float], None]] = None,
    ) -> Tuple[bool, str]:
        """
        Move instances on `cluster`, which must already hold plan.initial_placement.
        The whole plan is checked on a copy first; a plan with any move that does not
        fit is reported and leaves `cluster` untouched.
        """
        ok, message = self._check_moves(plan, cluster.clone())
        if not ok:
            return False, message
        total = len(plan.moves) or 1
        for i, move in enumerate(plan.moves):
            spec = self.app.services[self.app.service_id(move.service)]
            cluster.release(move.source, spec.req_cpu, spec.req_mem)
            cluster.commit(move.target, spec.req_cpu, spec.req_mem)
            if on_progress:
                on_progress(f"{move.service}[{move.replica}]  {move.source} → {move.target}", (i + 1) / total)
        return True, f"applied {len(plan.moves)} moves"

    def _check_moves(self, plan: ReschedulePlan, scratch: Topology) -> Tuple[bool, str]:
        for move in plan.moves:
            spec = self.app.services[self.app.service_id(move.service)]
            if not scratch.can_host(move.target, spec.req_cpu, spec.req_mem):
                return False, f"step {move.step}: node {move.target} cannot host {move.service}[{move.replica}]"
            try:
                scratch.release(move.source, spec.req_cpu, spec.req_mem)
            except CapacityError:
                return False, f"step {move.step}: node {move.source} does not hold {move.service}[{move.replica}]"
            scratch.commit(move.target, spec.req_cpu, spec.req_mem)
        return True, "plan fits"


# ── Files ────────────────────────────────────────────────────

def export_plan(plan: ReschedulePlan, bench: Workbench, name: str = PLAN_FILE) -> Path:
    return bench.write_json(name, plan)


def load_plan(path: Union[str, Path]) -> ReschedulePlan:
    path = Path(path)
    try:
        return ReschedulePlan.model_validate_json(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ConfigError(f"plan file not found: {path}") from e
    except ValidationError as e:
        raise ConfigError(f"{path}: invalid plan\n{e}") from e


def load_placement(path: Union[str, Path]) -> Placement:
    """Placement file: {"assignment": [[node, ...], ...]} or a bare list of lists."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ConfigError(f"placement file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise PlacementError(f"{path}: malformed JSON ({e})") from e
    rows = data.get("assignment") if isinstance(data, dict) else data
    try:
        return Placement(assignment=rows)
    except (ValidationError, TypeError, ValueError) as e:
        raise PlacementError(f"{path}: unreadable placement ({e})") from e
