"""
CONTINUUM-FORGE — Data Models
All configuration, file formats and reports as Pydantic models for strict validation.
"""

from __future__ import annotations
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator

Tier = Literal["cloud", "edge"]
SchedulerName = Literal["default", "cloud_first", "latency_greedy"]


# ── Topology ──────────────────────────────────────────────────────────────────

class NodeConfig(BaseModel):
    """One node as written in a topology file."""
    id: int = Field(ge=0)
    type: str
    cpu: float = Field(gt=0)
    mem: float = Field(gt=0)
    tier: Optional[Tier] = None

    @model_validator(mode="after")
    def _infer_tier(self) -> "NodeConfig":
        if self.tier is None:
            self.tier = "cloud" if self.type.lower().startswith("cloud") else "edge"
        return self


class ResourceUsage(BaseModel):
    cpu: float = Field(default=0.0, ge=0)
    mem: float = Field(default=0.0, ge=0)


class TopologyConfig(BaseModel):
    """Topology file: nodes, latencies (ms), execution profiles (ms)."""
    name: str = "topology"
    nodes: List[NodeConfig]
    latency_matrix: List[List[float]]
    user_latency: List[float]
    # service name -> node type -> ms
    profiles: Dict[str, Dict[str, float]] = Field(default_factory=dict)
    # service name -> node id -> ms, overrides the type entry
    node_profiles: Dict[str, Dict[int, float]] = Field(default_factory=dict)
    background: Optional[List[ResourceUsage]] = None
    background_utilization: Tuple[float, float] = (0.0, 0.5)
    asymmetric: bool = False
    round_trip: bool = False

    @model_validator(mode="after")
    def _check_shapes(self) -> "TopologyConfig":
        n = len(self.nodes)
        if n == 0:
            raise ValueError("topology has no nodes")
        ids = sorted(node.id for node in self.nodes)
        if ids != list(range(n)):
            raise ValueError(f"node ids must be dense 0..{n - 1}, got {ids}")
        if len(self.latency_matrix) != n or any(len(row) != n for row in self.latency_matrix):
            raise ValueError(f"latency_matrix must be {n}x{n}")
        d = np.asarray(self.latency_matrix, dtype=float)
        if (d < 0).any():
            raise ValueError("latency_matrix entries must be >= 0")
        if np.any(np.diag(d) != 0):
            raise ValueError("latency_matrix diagonal must be 0")
        if not self.asymmetric and not np.allclose(d, d.T):
            raise ValueError("latency_matrix is not symmetric (set asymmetric: true to allow)")
        if len(self.user_latency) != n:
            raise ValueError(f"user_latency must have {n} entries")
        if any(u < 0 for u in self.user_latency):
            raise ValueError("user_latency entries must be >= 0")
        for service, table in self.profiles.items():
            if any(ms <= 0 for ms in table.values()):
                raise ValueError(f"profile entries for '{service}' must be > 0")
            overrides = self.node_profiles.get(service, {})
            missing = {
                node.type for node in self.nodes
                if node.type not in table and node.id not in overrides
            }
            if missing:
                raise ValueError(f"profile for '{service}' is missing node types {sorted(missing)}")
        for service, table in self.node_profiles.items():
            if any(ms <= 0 for ms in table.values()):
                raise ValueError(f"node profile entries for '{service}' must be > 0")
            if any(node_id >= n for node_id in table):
                raise ValueError(f"node profile for '{service}' references an unknown node")
        if self.background is not None and len(self.background) != n:
            raise ValueError(f"background must have {n} entries")
        lo, hi = self.background_utilization
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValueError("background_utilization must satisfy 0 <= lo <= hi <= 1")
        return self


class NodeSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: int
    node_type: str
    tier: Tier
    cpu_capacity: float = Field(gt=0)
    mem_capacity: float = Field(gt=0)


class NodeState(BaseModel):
    requested_cpu: float
    requested_mem: float
    available_cpu: float
    available_mem: float
    alive: bool = True


# ── Application ───────────────────────────────────────────────────────────────

class ServiceConfig(BaseModel):
    name: str
    cpu: float = Field(gt=0)
    mem: float = Field(gt=0)
    replicas: int = Field(default=1, ge=1)
    max_replicas: int = Field(default=5, ge=1)

    @model_validator(mode="after")
    def _check_replicas(self) -> "ServiceConfig":
        if self.replicas > self.max_replicas:
            raise ValueError(f"service '{self.name}': replicas {self.replicas} > max_replicas {self.max_replicas}")
        return self


class GroupConfig(BaseModel):
    caller: str
    members: List[str] = Field(min_length=1)


class AppConfig(BaseModel):
    """App file: services, gateway and invocation groups, all by service name."""
    name: str = "app"
    services: List[ServiceConfig]
    gateway: str
    groups: List[GroupConfig] = Field(default_factory=list)


class ServiceSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: int
    name: str
    req_cpu: float = Field(gt=0)
    req_mem: float = Field(gt=0)
    replicas: int = Field(ge=1)
    max_replicas: int = Field(ge=1)

    @model_validator(mode="after")
    def _check_replicas(self) -> "ServiceSpec":
        if self.replicas > self.max_replicas:
            raise ValueError(f"replicas {self.replicas} > max_replicas {self.max_replicas}")
        return self


class InvocationGroup(BaseModel):
    """Callees invoked strictly sequentially; distinct groups of one caller run in parallel."""
    model_config = ConfigDict(frozen=True)

    caller: int
    members: Tuple[int, ...] = Field(min_length=1)

    @model_validator(mode="after")
    def _no_self_call(self) -> "InvocationGroup":
        if self.caller in self.members:
            raise ValueError(f"service {self.caller} invokes itself")
        return self


class Placement(BaseModel):
    """assignment[i][k] is the node hosting replica k of service i."""
    model_config = ConfigDict(frozen=True)

    assignment: Tuple[Tuple[int, ...], ...]

    @field_validator("assignment", mode="before")
    @classmethod
    def _as_tuples(cls, v):
        return tuple(tuple(int(n) for n in row) for row in v)

    def instances(self) -> List[Tuple[int, int, int]]:
        """Flattened (service, replica, node) in service order, replicas by index."""
        return [
            (service, replica, node)
            for service, row in enumerate(self.assignment)
            for replica, node in enumerate(row)
        ]


# ── Latency ───────────────────────────────────────────────────────────────────

class LatencyReport(BaseModel):
    """D_msa and every intermediate term. Edge keys are 'caller->callee', group keys 'caller[k]'."""
    d_msa: float
    d_gateway: float
    t_e: Dict[str, float]
    t_s: Dict[str, float]
    d_s: Dict[str, float]
    t_ij: Dict[str, float]
    t_g: Dict[str, float]
    placement: List[List[int]] = Field(default_factory=list)


# ── Environment ───────────────────────────────────────────────────────────────

class EnvConfig(BaseModel):
    s_max: int = Field(default=20, ge=1)
    n_nodes: Optional[int] = None
    max_steps: int = Field(default=50, ge=1)
    penalty_cost: float = Field(default=2.0, ge=0)
    invalid_penalty: float = -100.0
    masking: bool = True
    seed: int = 0
    # None means: use the topology file's range
    background_utilization: Optional[Tuple[float, float]] = None
    max_reset_retries: int = Field(default=1000, ge=1)


class StepResult(BaseModel):
    """`terminated` is true when the episode is over: Idle, invalid action, or step-limit (`truncated`)."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    observation: np.ndarray
    reward: float
    terminated: bool
    truncated: bool = False
    info: Dict[str, object] = Field(default_factory=dict)


# ── Agents ────────────────────────────────────────────────────────────────────

class PpoConfig(BaseModel):
    lr: float = Field(default=3e-4, ge=0)
    gamma: float = 0.99
    clip_range: float = 0.2
    ent_coef: float = 0.0
    vf_coef: float = 0.5
    gae_lambda: float = Field(default=0.95, ge=0, le=1)
    rollout_length: int = Field(default=2048, ge=1)
    epochs: int = Field(default=10, ge=1)
    minibatch_size: int = Field(default=64, ge=1)
    total_steps: int = Field(default=500_000, ge=0)
    max_grad_norm: float = 0.5
    hidden: int = Field(default=64, ge=1)
    checkpoint_every: int = Field(default=0, ge=0)

    @field_validator("gamma")
    @classmethod
    def _gamma(cls, v: float) -> float:
        if not 0 < v <= 1:
            raise ValueError("gamma must be in (0, 1]")
        return v

    @field_validator("clip_range")
    @classmethod
    def _clip(cls, v: float) -> float:
        if v <= 0:
            raise ValueError("clip_range must be > 0")
        return v


class DqnConfig(BaseModel):
    lr: float = Field(default=3e-4, ge=0)
    gamma: float = 0.99
    exploration_fraction: float = Field(default=0.1, ge=0, le=1)
    initial_eps: float = Field(default=1.0, ge=0, le=1)
    final_eps: float = Field(default=0.02, ge=0, le=1)
    buffer_size: int = Field(default=100_000, ge=1)
    batch_size: int = Field(default=64, ge=1)
    learning_starts: Optional[int] = None
    train_freq: int = Field(default=4, ge=1)
    target_update_interval: int = Field(default=1000, ge=1)
    tau: float = Field(default=1.0, gt=0, le=1)
    total_steps: int = Field(default=500_000, ge=0)
    max_grad_norm: float = 10.0
    hidden: int = Field(default=64, ge=1)
    checkpoint_every: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _check(self) -> "DqnConfig":
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must be in (0, 1]")
        if self.buffer_size < self.batch_size:
            raise ValueError("buffer_size must be >= batch_size")
        return self

    @property
    def warmup(self) -> int:
        return self.batch_size if self.learning_starts is None else max(self.learning_starts, self.batch_size)


class TrainStats(BaseModel):
    agent: str
    window: int = 100
    steps: int = 0
    updates: int = 0
    episode_rewards: List[float] = Field(default_factory=list)
    episode_lengths: List[int] = Field(default_factory=list)
    episode_end_steps: List[int] = Field(default_factory=list)
    moving_average: List[float] = Field(default_factory=list)
    wall_clock: List[float] = Field(default_factory=list)

    def record_episode(self, reward: float, length: int, step: int, wall: float) -> None:
        self.episode_rewards.append(float(reward))
        self.episode_lengths.append(int(length))
        self.episode_end_steps.append(int(step))
        recent = self.episode_rewards[-self.window:]
        self.moving_average.append(float(np.mean(recent)))
        self.wall_clock.append(float(wall))

    def final_mean(self, last: Optional[int] = None) -> float:
        if not self.episode_rewards:
            return float("nan")
        return float(np.mean(self.episode_rewards[-(last or self.window):]))

    def curve_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "step": self.episode_end_steps,
            "episode": list(range(1, len(self.episode_rewards) + 1)),
            "reward": self.episode_rewards,
            "moving_average": self.moving_average,
        })

    def timing_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "step": self.episode_end_steps,
            "episode": list(range(1, len(self.episode_rewards) + 1)),
            "wall_clock": self.wall_clock,
        })


# ── Oracle ────────────────────────────────────────────────────────────────────

class OracleResult(BaseModel):
    optimal_d_msa: float
    best_placements: List[Placement]
    feasible_count: int
    enumerated: int


# ── Scenarios ─────────────────────────────────────────────────────────────────

class ScenarioEvent(BaseModel):
    tick: int = Field(ge=0)
    kind: Literal["kill_node", "set_threads", "autoscale"]
    node: Optional[int] = None
    threads: Optional[int] = Field(default=None, ge=1)
    threshold: Optional[float] = Field(default=None, gt=0)
    enabled: bool = True

    @model_validator(mode="after")
    def _fields_for_kind(self) -> "ScenarioEvent":
        if self.kind == "kill_node" and self.node is None:
            raise ValueError("kill_node needs 'node'")
        if self.kind == "set_threads" and self.threads is None:
            raise ValueError("set_threads needs 'threads'")
        if self.kind == "autoscale" and self.enabled and self.threshold is None:
            raise ValueError("autoscale needs 'threshold'")
        return self


class Scenario(BaseModel):
    name: str = "scenario"
    app: str = "chain"
    replicas: Optional[int] = None
    initial_scheduler: SchedulerName = "default"
    # checkpoint path, or None for no rescheduling
    rescheduler: Optional[str] = None
    events: List[ScenarioEvent] = Field(default_factory=list)
    duration: int = Field(default=180, ge=1)
    threads: int = Field(default=1, ge=1)
    noise_seed: int = 0
    noise_amplitude: float = Field(default=0.05, ge=0, lt=1)
    handover_spike_ms: float = Field(default=0.0, ge=0)
    # service name -> cores consumed per client thread
    cpu_per_request: Dict[str, float] = Field(default_factory=dict)
    max_steps: int = Field(default=50, ge=1)
    penalty_cost: float = Field(default=2.0, ge=0)
    churn_window: Optional[int] = None
    churn_limit: int = Field(default=2, ge=1)
    slo_ms: float = Field(default=250.0, gt=0)

    @field_validator("rescheduler", mode="before")
    @classmethod
    def _none_string(cls, v):
        return None if v in ("none", "", None) else v

    @model_validator(mode="after")
    def _events_in_range(self) -> "Scenario":
        for event in self.events:
            if event.tick >= self.duration:
                raise ValueError(f"event at tick {event.tick} is outside duration {self.duration}")
        return self


class TimeSeries(BaseModel):
    ticks: List[int] = Field(default_factory=list)
    d_msa: List[float] = Field(default_factory=list)
    observed: List[float] = Field(default_factory=list)
    rps: List[float] = Field(default_factory=list)
    threads: List[int] = Field(default_factory=list)
    replicas: Dict[str, List[int]] = Field(default_factory=dict)
    markers: List[str] = Field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({
            "tick": self.ticks,
            "d_msa": self.d_msa,
            "observed": self.observed,
            "rps": self.rps,
            "threads": self.threads,
        })
        for name, counts in self.replicas.items():
            frame[f"replicas_{name}"] = counts
        frame["marker"] = self.markers
        return frame


class OverheadReport(BaseModel):
    actions: int = 0
    moved_instances: int = 0
    active_pods: int = 0
    fraction_moved: float = Field(default=0.0, ge=0, le=1)
    max_moves_per_instance: int = 0
    churn: bool = False
    moves_per_instance: Dict[str, int] = Field(default_factory=dict)


class SeriesSummary(BaseModel):
    count: int
    mean: float
    slo_ms: float
    fraction_under_slo: float
    spike_count: int
    moving_average: List[float]


# ── Runs & plans ──────────────────────────────────────────────────────────────

class RunManifest(BaseModel):
    command: str
    config_paths: Dict[str, str] = Field(default_factory=dict)
    args: Dict[str, object] = Field(default_factory=dict)
    seed: int = 0
    artifact_hash: str = ""
    output_dir: str = ""
    version: str = ""


class PlanMove(BaseModel):
    """One non-idle action. Written as {"instance": [service, replica], "from": node, "to": node, ...}."""
    model_config = ConfigDict(populate_by_name=True)

    step: int
    service: str
    replica: int
    source: int = Field(alias="from")
    target: int = Field(alias="to")
    d_msa_before: float
    d_msa_after: float

    @computed_field
    @property
    def instance(self) -> List[object]:
        return [self.service, self.replica]


class ReschedulePlan(BaseModel):
    """Ordered moves a checkpoint proposes for one cluster state. Built before anything is applied."""
    app: str
    initial_placement: Placement
    final_placement: Placement
    initial_d_msa: float
    final_d_msa: float
    moves: List[PlanMove] = Field(default_factory=list)
    idle_reached: bool = True
    truncated: bool = False

    @computed_field
    @property
    def d_msa_trajectory(self) -> List[float]:
        return [self.initial_d_msa] + [m.d_msa_after for m in self.moves]

    def summary(self) -> str:
        gain = self.initial_d_msa - self.final_d_msa
        lines = [
            f"  [cyan]Moves[/]    {len(self.moves)}",
            f"  [cyan]D_msa[/]    {self.initial_d_msa:.2f} → {self.final_d_msa:.2f} ms  ([green]{-gain:+.2f}[/])",
        ]
        if self.truncated:
            lines.append("  [yellow]Step limit reached before Idle[/]")
        return "\n".join(lines)
