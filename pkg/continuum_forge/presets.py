"""
CONTINUUM-FORGE — Presets
Bundled topologies, benchmark apps and scenarios, addressable by name.
"""

from __future__ import annotations
import json
from importlib import resources
from pathlib import Path
from typing import List, Optional, Union

from pydantic import ValidationError

from .app_graph import AppGraph, parse_app, set_all_replicas
from .errors import ConfigError
from .models import AppConfig, Scenario, TopologyConfig
from .topology import Topology, load_topology

APP_PRESETS = ("chain", "agg-seq", "agg-par")
TOPOLOGY_PRESETS = ("testbed6", "scale18")
SCENARIO_PRESETS = ("node-failure", "traffic-surge")


def _read(kind: str, name: str) -> dict:
    ref = resources.files("continuum_forge").joinpath("presets", kind, f"{name}.json")
    return json.loads(ref.read_text(encoding="utf-8"))


# ── Topologies ───────────────────────────────────────────────

def tiered_topology(base: TopologyConfig, factor: int, name: Optional[str] = None) -> TopologyConfig:
    """
    Repeat every node of `base` `factor` times. Latency between two nodes is the
    base latency between their originals; copies of one original get that
    original's smallest non-zero latency to a node of the same tier.
    """
    n = len(base.nodes)
    nodes = []
    origin: List[int] = []
    for k in range(factor):
        for node in base.nodes:
            nodes.append({"id": len(nodes), "type": node.type, "cpu": node.cpu, "mem": node.mem, "tier": node.tier})
            origin.append(node.id)
    same_tier = {}
    for node in base.nodes:
        peers = [
            base.latency_matrix[node.id][other.id]
            for other in base.nodes
            if other.id != node.id and other.tier == node.tier and base.latency_matrix[node.id][other.id] > 0
        ]
        same_tier[node.id] = min(peers) if peers else min(v for v in base.latency_matrix[node.id] if v > 0)
    total = n * factor
    matrix = [[0.0] * total for _ in range(total)]
    for i in range(total):
        for j in range(total):
            if i == j:
                continue
            oi, oj = origin[i], origin[j]
            matrix[i][j] = same_tier[oi] if oi == oj else base.latency_matrix[oi][oj]
    return TopologyConfig(
        name=name or f"{base.name}x{factor}",
        nodes=nodes,
        latency_matrix=matrix,
        user_latency=[base.user_latency[o] for o in origin],
        profiles=base.profiles,
        background_utilization=base.background_utilization,
        asymmetric=base.asymmetric,
        round_trip=base.round_trip,
    )


def topology_config(name: str) -> TopologyConfig:
    if name == "testbed6":
        return TopologyConfig.model_validate(_read("topologies", "testbed6"))
    if name == "scale18":
        return tiered_topology(topology_config("testbed6"), 3, name="scale18")
    raise ConfigError(f"unknown topology preset '{name}' (choose from {', '.join(TOPOLOGY_PRESETS)})")


def topology_preset(name: str) -> Topology:
    return load_topology(topology_config(name))


# ── Apps ─────────────────────────────────────────────────────

def app_preset(name: str, replicas: Optional[int] = None, max_replicas: Optional[int] = None) -> AppGraph:
    """One of the three benchmark shapes, optionally with every service resized."""
    if name not in APP_PRESETS:
        raise ConfigError(f"unknown app preset '{name}' (choose from {', '.join(APP_PRESETS)})")
    raw = _read("apps", name)
    if max_replicas is not None:
        for svc in raw["services"]:
            svc["max_replicas"] = max_replicas
    app = parse_app(AppConfig.model_validate(raw))
    return set_all_replicas(app, replicas) if replicas is not None else app


# ── Scenarios ────────────────────────────────────────────────

def scenario_preset(name: str) -> Scenario:
    if name not in SCENARIO_PRESETS:
        raise ConfigError(f"unknown scenario preset '{name}' (choose from {', '.join(SCENARIO_PRESETS)})")
    return Scenario.model_validate(_read("scenarios", name))


# ── Name-or-path resolution (CLI) ────────────────────────────

def resolve_topology(value: Union[str, Path]) -> Topology:
    path = Path(value)
    if path.suffix == ".json" or path.exists():
        return load_topology(path)
    return topology_preset(str(value))


def resolve_app(value: Union[str, Path], replicas: Optional[int] = None, max_replicas: Optional[int] = None) -> AppGraph:
    path = Path(value)
    if path.suffix == ".json" or path.exists():
        app = parse_app(path)
        if max_replicas is not None:
            app = app.with_services([s.model_copy(update={"max_replicas": max_replicas}) for s in app.services])
        return set_all_replicas(app, replicas) if replicas is not None else app
    return app_preset(str(value), replicas=replicas, max_replicas=max_replicas)


def resolve_scenario(value: Union[str, Path]) -> Scenario:
    path = Path(value)
    if path.suffix == ".json" or path.exists():
        try:
            return Scenario.model_validate_json(path.read_text(encoding="utf-8"))
        except FileNotFoundError as e:
            raise ConfigError(f"scenario file not found: {path}") from e
        except ValidationError as e:
            raise ConfigError(f"{path}: invalid scenario\n{e}") from e
    return scenario_preset(str(value))
