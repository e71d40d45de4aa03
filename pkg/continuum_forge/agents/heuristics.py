"""
CONTINUUM-FORGE — Heuristic Schedulers
Initial-placement baselines: default (random feasible), cloud_first, latency_greedy.
"""

from __future__ import annotations
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..app_graph import AppGraph
from ..errors import ConfigError, InfeasibleError
from ..models import Placement
from ..topology import Topology

SCHEDULERS = ("default", "cloud_first", "latency_greedy")


def choose_node(
    scheduler: str,
    topology: Topology,
    req_cpu: float,
    req_mem: float,
    rng: np.random.Generator,
) -> Optional[int]:
    """Node the scheduler would pick for one instance, or None if nothing fits."""
    if scheduler not in SCHEDULERS:
        raise ConfigError(f"unknown scheduler '{scheduler}' (choose from {', '.join(SCHEDULERS)})")
    candidates = topology.feasible_nodes(req_cpu, req_mem)
    if not candidates:
        return None
    if scheduler == "default":
        return int(rng.choice(candidates))
    if scheduler == "cloud_first":
        cloud = set(topology.cloud_nodes())
        preferred = [n for n in candidates if n in cloud]
        return (preferred or candidates)[0]
    user = topology.user_latency[candidates]
    return candidates[int(np.argmin(user))]


def place_instances(
    app: AppGraph,
    topology: Topology,
    scheduler: str,
    slots: Sequence[Tuple[int, int]],
    rng: np.random.Generator,
) -> Dict[Tuple[int, int], int]:
    """
    Place the given (service, replica) instances one by one, committing each on `topology`.
    All or nothing: on InfeasibleError the commits made so far are released.
    """
    chosen: Dict[Tuple[int, int], int] = {}
    for service, replica in slots:
        spec = app.services[service]
        node = choose_node(scheduler, topology, spec.req_cpu, spec.req_mem, rng)
        if node is None:
            error = InfeasibleError(
                f"{scheduler}: no node can host '{spec.name}' replica {replica} "
                f"({spec.req_cpu:g} cpu, {spec.req_mem:g} MB)",
                diagnostics={
                    "available_cpu": topology.available_cpu.round(3).tolist(),
                    "available_mem": topology.available_mem.round(1).tolist(),
                    "alive": topology.alive.tolist(),
                },
            )
            for (done, _), host in chosen.items():
                topology.release(host, app.services[done].req_cpu, app.services[done].req_mem)
            raise error
        topology.commit(node, spec.req_cpu, spec.req_mem)
        chosen[(service, replica)] = node
    return chosen


def heuristic_place(
    app: AppGraph,
    topology: Topology,
    scheduler: str = "default",
    rng: Optional[np.random.Generator] = None,
) -> Placement:
    """Place every instance in slot order. Commits the placement on `topology`."""
    rng = rng or np.random.default_rng(0)
    chosen = place_instances(app, topology, scheduler, app.instance_slots(), rng)
    rows: List[List[int]] = [
        [chosen[(s.id, r)] for r in range(s.replicas)] for s in app.services
    ]
    return Placement(assignment=rows)
