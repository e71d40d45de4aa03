"""
CONTINUUM-FORGE — CEEnv
Step-based rescheduling environment over the latency model.

Action a = slot·N + node moves instance `slot` to `node`; a = s_max·N is Idle.
Reward for a move is D_before − D_after − penalty_cost.
"""

from __future__ import annotations
import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import gymnasium as gym
import numpy as np
from gymnasium import spaces

from .app_graph import AppGraph, total_instances
from .errors import ActionError, ConfigError, InfeasibleError
from .latency import LatencyModel
from .models import EnvConfig, Placement, StepResult
from .topology import EPS, Topology

log = logging.getLogger(__name__)


def observation_size(n_nodes: int, s_max: int) -> int:
    return 4 * n_nodes + 2 * s_max + s_max * n_nodes


def action_count(n_nodes: int, s_max: int) -> int:
    return s_max * n_nodes + 1


def obs_hash(obs: np.ndarray) -> str:
    return hashlib.sha1(np.ascontiguousarray(obs).tobytes()).hexdigest()[:16]


class TrajectoryLog:
    """JSON-lines sink: one record per reset/step."""

    def __init__(self, path: Union[str, Path]) -> None:
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = self.path.open("w", encoding="utf-8")

    def write(self, record: Dict[str, Any]) -> None:
        self._fh.write(json.dumps(record, sort_keys=True) + "\n")

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.close()


class CEEnv(gym.Env):
    """Cloud–edge continuum rescheduling environment for one application."""

    metadata = {"render_modes": []}

    def __init__(
        self,
        app: AppGraph,
        topology: Topology,
        config: Optional[EnvConfig] = None,
        trajectory_path: Optional[Union[str, Path]] = None,
    ) -> None:
        super().__init__()
        self.app = app
        self.base_topology = topology
        self.config = config or EnvConfig()
        self.n_nodes = topology.n_nodes
        self.s_max = self.config.s_max
        if self.config.n_nodes is not None and self.config.n_nodes != self.n_nodes:
            raise ConfigError(f"env config expects {self.config.n_nodes} nodes, topology has {self.n_nodes}")
        if total_instances(app) > self.s_max:
            raise ConfigError(f"app runs {total_instances(app)} instances but s_max is {self.s_max}")

        self.n_actions = action_count(self.n_nodes, self.s_max)
        self.idle_action = self.n_actions - 1
        self.action_space = spaces.Discrete(self.n_actions)
        self.observation_space = spaces.Box(
            low=0.0, high=1.0, shape=(observation_size(self.n_nodes, self.s_max),), dtype=np.float32
        )

        self.latency = LatencyModel(app, topology)
        self._cpu_norm = float(topology.cpu_capacity.max())
        self._mem_norm = float(topology.mem_capacity.max())
        self.slots: List[Tuple[int, int]] = app.instance_slots()
        self._slot_cpu = np.zeros(self.s_max)
        self._slot_mem = np.zeros(self.s_max)
        for k, (service, _) in enumerate(self.slots):
            self._slot_cpu[k] = app.services[service].req_cpu
            self._slot_mem[k] = app.services[service].req_mem
        self._present = np.zeros(self.s_max, dtype=bool)
        self._present[: len(self.slots)] = True

        self.topology: Topology = topology.clone()
        self.rows: List[List[int]] = []
        self.slot_node = np.full(self.s_max, -1, dtype=int)
        self.d_msa = 0.0
        self.steps = 0
        self._done = True
        self._seeded = False
        self._trajectory = TrajectoryLog(trajectory_path) if trajectory_path else None

    # ── Encoding ─────────────────────────────────────────────

    def encode(self, slot: int, node: int) -> int:
        return slot * self.n_nodes + node

    def decode(self, action: int) -> Optional[Tuple[int, int]]:
        """(slot, node) for a move, None for Idle."""
        if action == self.idle_action:
            return None
        return divmod(int(action), self.n_nodes)

    def slot_of(self, service: int, replica: int) -> int:
        return self.slots.index((service, replica))

    @property
    def placement(self) -> Placement:
        return Placement(assignment=self.rows)

    def observation(self) -> np.ndarray:
        topo = self.topology
        avail_cpu = np.where(topo.alive, topo.available_cpu, 0.0) / self._cpu_norm
        avail_mem = np.where(topo.alive, topo.available_mem, 0.0) / self._mem_norm
        onehot = np.zeros((self.s_max, self.n_nodes))
        present = self.slot_node >= 0
        onehot[np.flatnonzero(present), self.slot_node[present]] = 1.0
        obs = np.concatenate([
            avail_cpu,
            avail_mem,
            topo.cpu_capacity / self._cpu_norm,
            topo.mem_capacity / self._mem_norm,
            self._slot_cpu / self._cpu_norm,
            self._slot_mem / self._mem_norm,
            onehot.ravel(),
        ])
        return np.clip(obs, 0.0, 1.0).astype(np.float32)

    # ── Masks ────────────────────────────────────────────────

    def legal_mask(self) -> np.ndarray:
        """True where A(i, j) is applicable: i exists, j alive, j ≠ node(i), j has room for i."""
        topo = self.topology
        room = (
            (topo.available_cpu[None, :] >= self._slot_cpu[:, None] - EPS)
            & (topo.available_mem[None, :] >= self._slot_mem[:, None] - EPS)
            & topo.alive[None, :]
            & self._present[:, None]
        )
        present = self.slot_node >= 0
        room[np.flatnonzero(present), self.slot_node[present]] = False
        return np.append(room.ravel(), True)

    def action_mask(self) -> np.ndarray:
        """Mask handed to agents: the legal mask, or all-true when masking is disabled."""
        if self.config.masking:
            return self.legal_mask()
        return np.ones(self.n_actions, dtype=bool)

    # ── Episode lifecycle ────────────────────────────────────

    def reset(self, *, seed: Optional[int] = None, options: Optional[Dict[str, Any]] = None):
        if seed is None and not self._seeded:
            seed = self.config.seed
        super().reset(seed=seed)
        self._seeded = True
        options = options or {}

        given_topology: Optional[Topology] = options.get("topology")
        placement: Optional[Placement] = options.get("placement")

        if placement is not None:
            self.topology = (given_topology or self._fresh_topology()).clone()
            self.app.apply_placement(placement, self.topology)
            self.rows = [list(row) for row in placement.assignment]
        else:
            self._random_deploy(given_topology)

        self.slot_node[:] = -1
        for k, (service, replica) in enumerate(self.slots):
            self.slot_node[k] = self.rows[service][replica]
        self.d_msa = self.latency.evaluate(self.rows)
        self.steps = 0
        self._done = False
        obs = self.observation()
        if self._trajectory:
            self._trajectory.write({"event": "reset", "obs": obs_hash(obs), "d_msa": self.d_msa})
        return obs, {"action_mask": self.action_mask(), "d_msa": self.d_msa}

    def _fresh_topology(self) -> Topology:
        topo = self.base_topology.clone()
        topo.draw_background(self.np_random, self.config.background_utilization)
        return topo

    def _random_deploy(self, given: Optional[Topology]) -> None:
        demand_cpu = float(self._slot_cpu.sum())
        demand_mem = float(self._slot_mem.sum())
        base = given or self.base_topology
        if (
            demand_cpu > float(base.cpu_capacity[base.alive].sum()) + EPS
            or demand_mem > float(base.mem_capacity[base.alive].sum()) + EPS
        ):
            raise InfeasibleError(
                f"app requests {demand_cpu:g} cpu / {demand_mem:g} MB, "
                f"more than the cluster's total capacity"
            )
        for attempt in range(self.config.max_reset_retries):
            topo = given.clone() if given is not None else self._fresh_topology()
            rows: List[List[int]] = [[] for _ in range(self.app.n_services)]
            for service, _ in self.slots:
                spec = self.app.services[service]
                candidates = topo.feasible_nodes(spec.req_cpu, spec.req_mem)
                if not candidates:
                    break
                node = int(self.np_random.choice(candidates))
                topo.commit(node, spec.req_cpu, spec.req_mem)
                rows[service].append(node)
            else:
                self.topology = topo
                self.rows = rows
                if attempt:
                    log.debug("random deployment succeeded after %d retries", attempt)
                return
        raise InfeasibleError(
            f"no feasible random deployment after {self.config.max_reset_retries} attempts"
        )

    def transition(self, action: int) -> StepResult:
        if self._done:
            raise ActionError("episode is over; call reset() first")
        if not 0 <= int(action) < self.n_actions:
            raise ActionError(f"action {action} outside [0, {self.n_actions - 1}]")
        action = int(action)
        self.steps += 1
        before = self.d_msa
        info: Dict[str, Any] = {"d_msa_before": before, "action": action}
        move = self.decode(action)

        if move is None:
            reward, terminated, legal = 0.0, True, True
        elif not self.legal_mask()[action]:
            if self.config.masking:
                self.steps -= 1
                raise ActionError(f"masked action {action} (slot {move[0]} -> node {move[1]})")
            reward, terminated, legal = float(self.config.invalid_penalty), True, False
        else:
            slot, node = move
            self._move(slot, node)
            self.d_msa = self.latency.evaluate(self.rows)
            reward = (before - self.d_msa) - self.config.penalty_cost
            terminated, legal = False, True
            info["moved"] = {"service": self.slots[slot][0], "replica": self.slots[slot][1], "to": node}

        truncated = not terminated and self.steps >= self.config.max_steps
        self._done = terminated or truncated
        info.update({"d_msa_after": self.d_msa, "legal": legal, "action_mask": self.action_mask()})
        obs = self.observation()
        if self._trajectory:
            self._trajectory.write({
                "event": "step",
                "obs": obs_hash(obs),
                "action": action,
                "reward": reward,
                "d_msa": self.d_msa,
            })
        return StepResult(
            observation=obs,
            reward=reward,
            terminated=self._done,
            truncated=truncated,
            info=info,
        )

    def step(self, action: int):
        result = self.transition(action)
        terminated = result.terminated and not result.truncated
        return result.observation, result.reward, terminated, result.truncated, result.info

    def _move(self, slot: int, node: int) -> None:
        service, replica = self.slots[slot]
        spec = self.app.services[service]
        old = int(self.slot_node[slot])
        self.topology.release(old, spec.req_cpu, spec.req_mem)
        self.topology.commit(node, spec.req_cpu, spec.req_mem)
        self.rows[service][replica] = node
        self.slot_node[slot] = node

    @property
    def done(self) -> bool:
        return self._done

    def close(self) -> None:
        if self._trajectory:
            self._trajectory.close()
        super().close()
