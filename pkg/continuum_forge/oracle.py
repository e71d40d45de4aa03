"""
CONTINUUM-FORGE — Oracle
Exhaustive search over every feasible placement of a small instance.
"""

from __future__ import annotations
import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Iterator, List, Optional, Tuple

import numpy as np

from .app_graph import AppGraph, total_instances
from .errors import InfeasibleError, OracleLimitError
from .latency import LatencyModel
from .models import OracleResult, Placement
from .topology import EPS, Topology

log = logging.getLogger(__name__)

DEFAULT_LIMIT = 10 ** 6
TIE_TOLERANCE = 1e-9


def search_space(app: AppGraph, topology: Topology) -> int:
    return topology.n_nodes ** total_instances(app)


def _check_limit(app: AppGraph, topology: Topology, limit: int) -> None:
    size = search_space(app, topology)
    if size > limit:
        raise OracleLimitError(
            f"{topology.n_nodes}^{total_instances(app)} = {size:.3g} placements exceeds the limit of {limit:,}",
            diagnostics={"nodes": topology.n_nodes, "instances": total_instances(app), "limit": limit},
        )


def _walk(
    app: AppGraph,
    topology: Topology,
    first: Optional[int] = None,
) -> Iterator[Tuple[List[List[int]], int]]:
    """
    Depth-first, mixed-radix order (slot 0 most significant). A prefix is dropped as
    soon as it overcommits a node. Yields (rows, visited-so-far); rows is reused.
    """
    slots = app.instance_slots()
    n = topology.n_nodes
    req = [(app.services[s].req_cpu, app.services[s].req_mem) for s, _ in slots]
    free_cpu = topology.available_cpu.copy()
    free_mem = topology.available_mem.copy()
    alive = topology.alive
    rows: List[List[int]] = [[-1] * s.replicas for s in app.services]
    choice = [-1] * len(slots)
    visited = 0
    k = 0
    if not slots:
        yield rows, 0
        return
    while k >= 0:
        # undo the previous choice for this slot
        if choice[k] >= 0:
            free_cpu[choice[k]] += req[k][0]
            free_mem[choice[k]] += req[k][1]
        node = choice[k] + 1
        last = n
        if k == 0 and first is not None:
            node = first if choice[0] < 0 else n
            last = first + 1
        while node < last:
            visited += 1
            if alive[node] and free_cpu[node] >= req[k][0] - EPS and free_mem[node] >= req[k][1] - EPS:
                break
            node += 1
        if node >= last:
            choice[k] = -1
            k -= 1
            continue
        choice[k] = node
        free_cpu[node] -= req[k][0]
        free_mem[node] -= req[k][1]
        service, replica = slots[k]
        rows[service][replica] = node
        if k == len(slots) - 1:
            yield rows, visited
        else:
            k += 1


def enumerate_placements(
    app: AppGraph,
    topology: Topology,
    limit: int = DEFAULT_LIMIT,
) -> Iterator[Placement]:
    """Every placement that fits the topology's current free capacity, each exactly once."""
    _check_limit(app, topology, limit)
    for rows, _ in _walk(app, topology):
        yield Placement(assignment=rows)


def _search(app: AppGraph, topology: Topology, first: Optional[int]) -> Tuple[float, List[Placement], int, int]:
    model = LatencyModel(app, topology)
    best = np.inf
    argmin: List[Placement] = []
    feasible = 0
    visited = 0
    for rows, visited in _walk(app, topology, first):
        feasible += 1
        d = model.evaluate(rows)
        if d < best - TIE_TOLERANCE:
            best = d
            argmin = [Placement(assignment=rows)]
        elif d <= best + TIE_TOLERANCE:
            argmin.append(Placement(assignment=rows))
    return float(best), argmin, feasible, visited


def optimal(
    app: AppGraph,
    topology: Topology,
    limit: int = DEFAULT_LIMIT,
    workers: int = 1,
) -> OracleResult:
    """
    Exact minimum D_msa over all feasible placements with every tied argmin.
    workers > 1 shards the search by the first instance's node.
    """
    _check_limit(app, topology, limit)
    if workers > 1 and total_instances(app) > 0:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_search, [app] * topology.n_nodes, [topology] * topology.n_nodes,
                                  range(topology.n_nodes)))
    else:
        parts = [_search(app, topology, None)]

    best = min((p[0] for p in parts), default=np.inf)
    argmin: List[Placement] = []
    for d, placements, _, _ in parts:
        if d <= best + TIE_TOLERANCE:
            argmin.extend(placements)
    feasible = sum(p[2] for p in parts)
    visited = sum(p[3] for p in parts)
    if feasible == 0:
        raise InfeasibleError("no placement of the app fits the topology", diagnostics={"visited": visited})
    log.info("oracle: %d feasible placements, %d visited, optimum %.3f ms (%d tied)",
             feasible, visited, best, len(argmin))
    return OracleResult(
        optimal_d_msa=best,
        best_placements=argmin,
        feasible_count=feasible,
        enumerated=visited,
    )
