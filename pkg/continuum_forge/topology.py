"""
CONTINUUM-FORGE — Topology
Heterogeneous cloud–edge nodes: capacity bookkeeping, latencies, execution profiles.
"""

from __future__ import annotations
import copy
import json
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
from pydantic import ValidationError

from .errors import CapacityError, TopologyError
from .models import NodeSpec, NodeState, ResourceUsage, TopologyConfig

log = logging.getLogger(__name__)

# Tolerance for fractional-core arithmetic (0.1 + 0.2 style drift).
EPS = 1e-9


class Topology:
    """
    Node capacities plus mutable per-node requested totals.
    A value object: clone() before handing one to a second owner.
    """

    def __init__(self, config: TopologyConfig) -> None:
        self.config = config
        self.nodes: List[NodeSpec] = [
            NodeSpec(
                id=n.id,
                node_type=n.type,
                tier=n.tier,
                cpu_capacity=n.cpu,
                mem_capacity=n.mem,
            )
            for n in sorted(config.nodes, key=lambda n: n.id)
        ]
        self.latency = np.asarray(config.latency_matrix, dtype=float)
        self.user_latency = np.asarray(config.user_latency, dtype=float)
        self.cpu_capacity = np.array([n.cpu_capacity for n in self.nodes], dtype=float)
        self.mem_capacity = np.array([n.mem_capacity for n in self.nodes], dtype=float)
        self.requested_cpu = np.zeros(self.n_nodes)
        self.requested_mem = np.zeros(self.n_nodes)
        self.alive = np.ones(self.n_nodes, dtype=bool)
        self.round_trip = config.round_trip
        if config.background is not None:
            for node, usage in enumerate(config.background):
                self.commit(node, usage.cpu, usage.mem)

    # ── Shape ────────────────────────────────────────────────

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def node_types(self) -> List[str]:
        return [n.node_type for n in self.nodes]

    def cloud_nodes(self) -> List[int]:
        return [n.id for n in self.nodes if n.tier == "cloud"]

    def _check_node(self, node: int) -> None:
        if not 0 <= node < self.n_nodes:
            raise TopologyError(f"unknown node id {node} (topology has {self.n_nodes} nodes)")

    # ── Capacity ─────────────────────────────────────────────

    @property
    def available_cpu(self) -> np.ndarray:
        return self.cpu_capacity - self.requested_cpu

    @property
    def available_mem(self) -> np.ndarray:
        return self.mem_capacity - self.requested_mem

    def state(self, node: int) -> NodeState:
        self._check_node(node)
        return NodeState(
            requested_cpu=float(self.requested_cpu[node]),
            requested_mem=float(self.requested_mem[node]),
            available_cpu=float(self.cpu_capacity[node] - self.requested_cpu[node]),
            available_mem=float(self.mem_capacity[node] - self.requested_mem[node]),
            alive=bool(self.alive[node]),
        )

    def can_host(self, node: int, req_cpu: float, req_mem: float) -> bool:
        self._check_node(node)
        if not self.alive[node]:
            return False
        return bool(
            self.cpu_capacity[node] - self.requested_cpu[node] >= req_cpu - EPS
            and self.mem_capacity[node] - self.requested_mem[node] >= req_mem - EPS
        )

    def feasible_nodes(self, req_cpu: float, req_mem: float) -> List[int]:
        ok = (
            self.alive
            & (self.available_cpu >= req_cpu - EPS)
            & (self.available_mem >= req_mem - EPS)
        )
        return [int(i) for i in np.flatnonzero(ok)]

    def commit(self, node: int, d_cpu: float, d_mem: float) -> NodeState:
        """Add (or, with negative deltas, release) requested resources on a node."""
        self._check_node(node)
        cpu = self.requested_cpu[node] + d_cpu
        mem = self.requested_mem[node] + d_mem
        if cpu > self.cpu_capacity[node] + EPS or mem > self.mem_capacity[node] + EPS:
            raise CapacityError(
                f"node {node}: commit ({d_cpu:g} cpu, {d_mem:g} MB) exceeds capacity "
                f"(available {self.cpu_capacity[node] - self.requested_cpu[node]:g} cpu, "
                f"{self.mem_capacity[node] - self.requested_mem[node]:g} MB)"
            )
        if cpu < -EPS or mem < -EPS:
            raise CapacityError(f"node {node}: release below zero requested resources")
        self.requested_cpu[node] = max(cpu, 0.0)
        self.requested_mem[node] = max(mem, 0.0)
        return self.state(node)

    def release(self, node: int, d_cpu: float, d_mem: float) -> NodeState:
        return self.commit(node, -d_cpu, -d_mem)

    def satisfies_capacity(self) -> bool:
        return bool(
            np.all(self.requested_cpu <= self.cpu_capacity + EPS)
            and np.all(self.requested_mem <= self.mem_capacity + EPS)
        )

    # ── Background load & failures ───────────────────────────

    def draw_background(
        self,
        rng: np.random.Generator,
        utilization: Optional[Tuple[float, float]] = None,
    ) -> None:
        """Replace requested totals with uniform draws in utilization·capacity."""
        lo, hi = utilization if utilization is not None else self.config.background_utilization
        self.requested_cpu = rng.uniform(lo, hi, self.n_nodes) * self.cpu_capacity
        self.requested_mem = rng.uniform(lo, hi, self.n_nodes) * self.mem_capacity

    def kill(self, node: int) -> None:
        self._check_node(node)
        self.alive[node] = False
        log.info("node %d (%s) marked dead", node, self.nodes[node].node_type)

    # ── Profiles ─────────────────────────────────────────────

    def exec_time(self, service: str, node: int) -> float:
        """E_node^service in ms, looked up via the node's type unless a per-node override exists."""
        self._check_node(node)
        override = self.config.node_profiles.get(service, {})
        if node in override:
            return float(override[node])
        table = self.config.profiles.get(service)
        node_type = self.nodes[node].node_type
        if table is None or node_type not in table:
            raise TopologyError(f"no execution profile for service '{service}' on node type '{node_type}'")
        return float(table[node_type])

    def exec_table(self, services: Iterable[str]) -> np.ndarray:
        """(service × node) execution times; fails on the first missing entry."""
        names = list(services)
        table = np.empty((len(names), self.n_nodes))
        for i, name in enumerate(names):
            for node in range(self.n_nodes):
                table[i, node] = self.exec_time(name, node)
        return table

    # ── Copies ───────────────────────────────────────────────

    def clone(self) -> "Topology":
        other = copy.copy(self)
        other.requested_cpu = self.requested_cpu.copy()
        other.requested_mem = self.requested_mem.copy()
        other.alive = self.alive.copy()
        return other


def load_topology(source: Union[str, Path, dict, TopologyConfig]) -> Topology:
    """Build a Topology from a JSON file, a dict, or a parsed config."""
    if isinstance(source, TopologyConfig):
        return Topology(source)
    origin = "<dict>"
    try:
        if isinstance(source, dict):
            config = TopologyConfig.model_validate(source)
        else:
            origin = str(source)
            raw = json.loads(Path(source).read_text(encoding="utf-8"))
            config = TopologyConfig.model_validate(raw)
    except FileNotFoundError as e:
        raise TopologyError(f"topology file not found: {origin}") from e
    except json.JSONDecodeError as e:
        raise TopologyError(f"{origin}: malformed JSON ({e})") from e
    except ValidationError as e:
        raise TopologyError(f"{origin}: invalid topology\n{e}") from e
    try:
        return Topology(config)
    except CapacityError as e:
        raise TopologyError(f"{origin}: background usage exceeds capacity ({e.message})") from e


def uniform_topology(
    n_nodes: int,
    cpu: float = 4.0,
    mem: float = 4096.0,
    latency: float = 0.0,
    user_latency: float = 0.0,
    profiles: Optional[Dict[str, float]] = None,
    node_type: str = "Edge-A",
) -> Topology:
    """Homogeneous full-mesh topology; handy for tests and toy runs."""
    d = [[0.0 if i == j else latency for j in range(n_nodes)] for i in range(n_nodes)]
    return load_topology({
        "nodes": [{"id": i, "type": node_type, "cpu": cpu, "mem": mem} for i in range(n_nodes)],
        "latency_matrix": d,
        "user_latency": [user_latency] * n_nodes,
        "profiles": {name: {node_type: ms} for name, ms in (profiles or {}).items()},
        "background": [ResourceUsage().model_dump() for _ in range(n_nodes)],
    })
