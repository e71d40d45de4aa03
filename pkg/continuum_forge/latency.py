"""
CONTINUUM-FORGE — Latency Engine
End-to-end latency of a placed application, evaluated callee-first over the invocation DAG.
"""

from __future__ import annotations
from typing import Dict, List, Sequence

import numpy as np

from .app_graph import AppGraph
from .errors import PlacementError
from .models import LatencyReport, Placement
from .topology import Topology

Assignment = Sequence[Sequence[int]]


class LatencyModel:
    """
    Pre-resolved (app, topology) pair. Execution profiles are looked up once;
    evaluate() is then pure and reentrant over any assignment of the app's instances.
    """

    def __init__(self, app: AppGraph, topology: Topology) -> None:
        self.app = app
        self.exec_ms = topology.exec_table(app.names)
        self.node_latency = topology.latency * (2.0 if topology.round_trip else 1.0)
        self.user_latency = topology.user_latency
        self.order = app.evaluation_order()
        self._groups = [app.groups_of(s) for s in range(app.n_services)]

    def _nodes(self, assignment: Assignment) -> List[np.ndarray]:
        nodes = [np.asarray(row, dtype=int) for row in assignment]
        for spec, row in zip(self.app.services, nodes):
            if row.size == 0:
                raise PlacementError(f"service '{spec.name}' has no running instances")
        return nodes

    def avg_exec(self, assignment: Assignment, service: int) -> float:
        nodes = self._nodes(assignment)[service]
        return float(self.exec_ms[service, nodes].mean())

    def avg_service_latency(self, assignment: Assignment, i: int, j: int) -> float:
        nodes = self._nodes(assignment)
        return float(self.node_latency[np.ix_(nodes[i], nodes[j])].mean())

    def evaluate(self, assignment: Assignment) -> float:
        nodes = self._nodes(assignment)
        t_s: Dict[int, float] = {}
        for service in self.order:
            t_e = self.exec_ms[service, nodes[service]].mean()
            best = 0.0
            for group in self._groups[service]:
                t_g = 0.0
                for callee in group.members:
                    d_s = self.node_latency[np.ix_(nodes[service], nodes[callee])].mean()
                    t_g += d_s + t_s[callee]
                best = max(best, t_g)
            t_s[service] = t_e + best
        gateway = self.app.gateway
        return float(self.user_latency[nodes[gateway]].mean() + t_s[gateway])

    def report(self, assignment: Assignment) -> LatencyReport:
        nodes = self._nodes(assignment)
        names = self.app.names
        t_e: Dict[str, float] = {}
        t_s: Dict[str, float] = {}
        d_s: Dict[str, float] = {}
        t_ij: Dict[str, float] = {}
        t_g: Dict[str, float] = {}
        for service in self.order:
            name = names[service]
            t_e[name] = float(self.exec_ms[service, nodes[service]].mean())
            best = 0.0
            for k, group in enumerate(self._groups[service]):
                total = 0.0
                for callee in group.members:
                    edge = f"{name}->{names[callee]}"
                    d_s[edge] = float(self.node_latency[np.ix_(nodes[service], nodes[callee])].mean())
                    t_ij[edge] = d_s[edge] + t_s[names[callee]]
                    total += t_ij[edge]
                t_g[f"{name}[{k}]"] = total
                best = max(best, total)
            t_s[name] = t_e[name] + best
        gateway = names[self.app.gateway]
        d_gateway = float(self.user_latency[nodes[self.app.gateway]].mean())
        return LatencyReport(
            d_msa=d_gateway + t_s[gateway],
            d_gateway=d_gateway,
            t_e=t_e,
            t_s=t_s,
            d_s=d_s,
            t_ij=t_ij,
            t_g=t_g,
            placement=[list(map(int, row)) for row in nodes],
        )


# ── Functional API ────────────────────────────────────────────────────────────

def avg_exec(app: AppGraph, service: int, placement: Placement, topology: Topology) -> float:
    """T_E: mean execution time over the service's placed instances."""
    return LatencyModel(app, topology).avg_exec(placement.assignment, service)


def avg_service_latency(
    app: AppGraph, service_i: int, service_j: int, placement: Placement, topology: Topology
) -> float:
    """D_S: node latency averaged over every instance pair of the two services."""
    return LatencyModel(app, topology).avg_service_latency(placement.assignment, service_i, service_j)


def end_to_end(app: AppGraph, placement: Placement, topology: Topology) -> LatencyReport:
    app.check_placement(placement, topology)
    return LatencyModel(app, topology).report(placement.assignment)


def d_msa(app: AppGraph, placement: Placement, topology: Topology) -> float:
    app.check_placement(placement, topology)
    return LatencyModel(app, topology).evaluate(placement.assignment)
