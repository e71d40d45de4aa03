"""Shared fixtures: tiny hand-checkable models plus the bundled testbed."""

from __future__ import annotations
from typing import Dict, Optional, Sequence

import numpy as np
import pytest

from continuum_forge.app_graph import AppGraph, parse_app
from continuum_forge.presets import app_preset, topology_preset
from continuum_forge.topology import Topology, load_topology


def build_topology(
    latency: Sequence[Sequence[float]],
    user_latency: Sequence[float],
    profiles: Dict[str, Dict[str, float]],
    types: Optional[Sequence[str]] = None,
    cpu: Optional[Sequence[float]] = None,
    mem: Optional[Sequence[float]] = None,
) -> Topology:
    n = len(user_latency)
    types = types or ["Edge-A"] * n
    cpu = cpu or [4.0] * n
    mem = mem or [4096.0] * n
    return load_topology({
        "nodes": [{"id": i, "type": types[i], "cpu": cpu[i], "mem": mem[i]} for i in range(n)],
        "latency_matrix": [list(row) for row in latency],
        "user_latency": list(user_latency),
        "profiles": profiles,
        "background": [{"cpu": 0.0, "mem": 0.0} for _ in range(n)],
        "background_utilization": [0.0, 0.0],
    })


def build_chain(names: Sequence[str], replicas: Optional[Sequence[int]] = None,
                cpu: float = 0.25, mem: float = 128.0) -> AppGraph:
    replicas = replicas or [1] * len(names)
    return parse_app({
        "name": "-".join(names),
        "services": [
            {"name": n, "cpu": cpu, "mem": mem, "replicas": r, "max_replicas": max(5, r)}
            for n, r in zip(names, replicas)
        ],
        "gateway": names[0],
        "groups": [{"caller": a, "members": [b]} for a, b in zip(names, names[1:])],
    })


@pytest.fixture
def hand_topology() -> Topology:
    """Two nodes 50 ms apart; user reaches node 0 in 10 ms. A runs 20 ms, B 30 ms."""
    return build_topology(
        latency=[[0.0, 50.0], [50.0, 0.0]],
        user_latency=[10.0, 10.0],
        profiles={"A": {"Edge-A": 20.0}, "B": {"Edge-A": 30.0}},
    )


@pytest.fixture
def ab_app() -> AppGraph:
    """A → B, B with two replicas."""
    return build_chain(["A", "B"], replicas=[1, 2])


@pytest.fixture
def testbed() -> Topology:
    return topology_preset("testbed6")


@pytest.fixture
def chain() -> AppGraph:
    return app_preset("chain")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


class ScriptedAgent:
    """Plays a fixed action list, then Idle."""

    kind = "scripted"

    def __init__(self, env, actions):
        self.obs_size = env.observation_space.shape[0]
        self.n_actions = env.n_actions
        self._idle = env.idle_action
        self._actions = list(actions)

    def greedy(self, obs, mask):
        return self._actions.pop(0) if self._actions else self._idle

    def meta(self):
        return {}
