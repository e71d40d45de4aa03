"""
CONTINUUM-FORGE — Application Graph
Services, replicas, gateway and invocation groups of one MSA application.
"""

from __future__ import annotations
import json
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import networkx as nx
from pydantic import ValidationError

from .errors import AppGraphError, CycleError, PlacementError
from .models import AppConfig, InvocationGroup, Placement, ServiceSpec
from .topology import EPS, Topology


class AppGraph:
    """
    Immutable view of an application. Mutating ops return a new AppGraph.
    Invariants: acyclic caller→member relation, gateway exists, all services reachable from it.
    """

    def __init__(
        self,
        services: Sequence[ServiceSpec],
        groups: Sequence[InvocationGroup],
        gateway: int,
        name: str = "app",
    ) -> None:
        self.name = name
        self.services: Tuple[ServiceSpec, ...] = tuple(services)
        self.groups: Tuple[InvocationGroup, ...] = tuple(groups)
        self.gateway = gateway
        self.graph = nx.DiGraph()
        self._validate()
        self._groups_of: Dict[int, List[InvocationGroup]] = {s.id: [] for s in self.services}
        for group in self.groups:
            self._groups_of[group.caller].append(group)

    def _validate(self) -> None:
        ids = [s.id for s in self.services]
        if ids != list(range(len(ids))):
            raise AppGraphError(f"service ids must be dense 0..{len(ids) - 1}")
        if not self.services:
            return
        if not 0 <= self.gateway < len(self.services):
            raise AppGraphError(f"gateway {self.gateway} is not a service")
        self.graph.add_nodes_from(ids)
        for group in self.groups:
            for sid in (group.caller, *group.members):
                if not 0 <= sid < len(self.services):
                    raise AppGraphError(f"group references unknown service {sid}")
            for member in group.members:
                self.graph.add_edge(group.caller, member)
        if not nx.is_directed_acyclic_graph(self.graph):
            cycle = nx.find_cycle(self.graph)
            names = " -> ".join(self.services[u].name for u, _ in cycle)
            raise CycleError(f"invocation graph has a cycle: {names} -> {self.services[cycle[0][0]].name}")
        unreachable = set(ids) - nx.descendants(self.graph, self.gateway) - {self.gateway}
        if unreachable:
            names = sorted(self.services[i].name for i in unreachable)
            raise AppGraphError(f"services not reachable from gateway: {names}")

    # ── Queries ──────────────────────────────────────────────

    @property
    def n_services(self) -> int:
        return len(self.services)

    @property
    def names(self) -> List[str]:
        return [s.name for s in self.services]

    def service_id(self, name: str) -> int:
        for s in self.services:
            if s.name == name:
                return s.id
        raise AppGraphError(f"unknown service '{name}'")

    def groups_of(self, service: int) -> List[InvocationGroup]:
        return self._groups_of[service]

    def evaluation_order(self) -> List[int]:
        """DFS post-order from the gateway: every callee before its callers."""
        if not self.services:
            return []
        return list(nx.dfs_postorder_nodes(self.graph, source=self.gateway))

    def instance_slots(self) -> List[Tuple[int, int]]:
        """(service, replica) in observation order: services by id, replicas by index."""
        return [(s.id, r) for s in self.services for r in range(s.replicas)]

    # ── Mutation (copy-on-write) ─────────────────────────────

    def with_services(self, services: Sequence[ServiceSpec]) -> "AppGraph":
        return AppGraph(services, self.groups, self.gateway, self.name)

    # ── Placement checks ─────────────────────────────────────

    def check_placement(self, placement: Placement, topology: Topology, capacity: bool = False) -> None:
        """
        Shape and liveness checks; with capacity=True also the capacity constraint on top of the
        topology's current requested totals (i.e. the placement is not yet committed).
        """
        if len(placement.assignment) != self.n_services:
            raise PlacementError(
                f"placement has {len(placement.assignment)} services, app has {self.n_services}"
            )
        for spec, row in zip(self.services, placement.assignment):
            if len(row) != spec.replicas:
                raise PlacementError(
                    f"service '{spec.name}' has {spec.replicas} replicas but {len(row)} placed"
                )
            for node in row:
                if not 0 <= node < topology.n_nodes:
                    raise PlacementError(f"service '{spec.name}' placed on unknown node {node}")
                if not topology.alive[node]:
                    raise PlacementError(f"service '{spec.name}' placed on dead node {node}")
        if capacity:
            cpu = topology.requested_cpu.copy()
            mem = topology.requested_mem.copy()
            for service, _, node in placement.instances():
                cpu[node] += self.services[service].req_cpu
                mem[node] += self.services[service].req_mem
            over = [
                i for i in range(topology.n_nodes)
                if cpu[i] > topology.cpu_capacity[i] + EPS or mem[i] > topology.mem_capacity[i] + EPS
            ]
            if over:
                raise PlacementError(f"placement exceeds capacity on nodes {over}")

    def apply_placement(self, placement: Placement, topology: Topology) -> None:
        """Commit every instance's request on its node."""
        self.check_placement(placement, topology, capacity=True)
        for service, _, node in placement.instances():
            spec = self.services[service]
            topology.commit(node, spec.req_cpu, spec.req_mem)

    def release_placement(self, placement: Placement, topology: Topology) -> None:
        for service, _, node in placement.instances():
            spec = self.services[service]
            topology.release(node, spec.req_cpu, spec.req_mem)


def _from_config(config: AppConfig) -> AppGraph:
    index: Dict[str, int] = {}
    services: List[ServiceSpec] = []
    for i, svc in enumerate(config.services):
        if svc.name in index:
            raise AppGraphError(f"duplicate service name '{svc.name}'")
        index[svc.name] = i
        services.append(ServiceSpec(
            id=i,
            name=svc.name,
            req_cpu=svc.cpu,
            req_mem=svc.mem,
            replicas=svc.replicas,
            max_replicas=svc.max_replicas,
        ))

    def lookup(name: str) -> int:
        if name not in index:
            raise AppGraphError(f"unknown service '{name}' referenced")
        return index[name]

    if config.gateway not in index:
        raise AppGraphError(f"gateway '{config.gateway}' is not a declared service")
    try:
        groups = [
            InvocationGroup(caller=lookup(g.caller), members=tuple(lookup(m) for m in g.members))
            for g in config.groups
        ]
    except ValidationError as e:
        raise AppGraphError(f"invalid invocation group\n{e}") from e
    return AppGraph(services, groups, index[config.gateway], config.name)


def parse_app(source: Union[str, Path, dict, AppConfig]) -> AppGraph:
    """Build a validated AppGraph from a JSON file, dict or AppConfig."""
    if isinstance(source, AppConfig):
        return _from_config(source)
    origin = "<dict>"
    try:
        if isinstance(source, dict):
            config = AppConfig.model_validate(source)
        else:
            origin = str(source)
            config = AppConfig.model_validate(json.loads(Path(source).read_text(encoding="utf-8")))
    except FileNotFoundError as e:
        raise AppGraphError(f"app file not found: {origin}") from e
    except json.JSONDecodeError as e:
        raise AppGraphError(f"{origin}: malformed JSON ({e})") from e
    except ValidationError as e:
        raise AppGraphError(f"{origin}: invalid app\n{e}") from e
    return _from_config(config)


def set_replicas(app: AppGraph, service: Union[int, str], count: int) -> AppGraph:
    """Resize one service. Placement of new instances is left to a scheduler."""
    sid = app.service_id(service) if isinstance(service, str) else service
    if not 0 <= sid < app.n_services:
        raise AppGraphError(f"unknown service {service}")
    spec = app.services[sid]
    if not 1 <= count <= spec.max_replicas:
        raise AppGraphError(
            f"replicas for '{spec.name}' must be in [1, {spec.max_replicas}], got {count}"
        )
    if count == spec.replicas:
        return app
    services = list(app.services)
    services[sid] = spec.model_copy(update={"replicas": count})
    return app.with_services(services)


def set_all_replicas(app: AppGraph, count: int) -> AppGraph:
    for sid in range(app.n_services):
        app = set_replicas(app, sid, count)
    return app


def total_instances(app: AppGraph) -> int:
    return sum(s.replicas for s in app.services)


def resize_placement(
    app: AppGraph, placement: Placement, service: int, nodes: Optional[Sequence[int]] = None, drop: int = 0
) -> Placement:
    """Append replicas on `nodes` and/or drop the last `drop` replicas of one service."""
    rows = [list(row) for row in placement.assignment]
    if drop:
        rows[service] = rows[service][:-drop]
    if nodes:
        rows[service].extend(nodes)
    return Placement(assignment=rows)
