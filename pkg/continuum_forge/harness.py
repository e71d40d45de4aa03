"""
CONTINUUM-FORGE — Scenario Harness
Tick-driven node-failure / traffic-surge runs with self-healing, autoscaling and
an optional rescheduling checkpoint, producing latency/RPS series and overhead.
"""

from __future__ import annotations
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from .agents import Agent, load_agent, place_instances
from .agents.heuristics import heuristic_place
from .app_graph import AppGraph, total_instances
from .errors import ConfigError, InfeasibleError
from .latency import LatencyModel
from .models import (
    EnvConfig,
    OverheadReport,
    Placement,
    ReschedulePlan,
    Scenario,
    ScenarioEvent,
    SeriesSummary,
    TimeSeries,
)
from .planner import Planner
from .presets import resolve_app
from .topology import Topology

log = logging.getLogger(__name__)

MOVING_AVERAGE_WINDOW = 30
SPIKE_RATIO = 1.2


class ScenarioResult(BaseModel):
    scenario: str
    series: TimeSeries
    overhead: OverheadReport
    summary: SeriesSummary
    plans: List[ReschedulePlan] = Field(default_factory=list)


# ── Autoscaling ──────────────────────────────────────────────

def utilization(app: AppGraph, threads: int, cpu_per_request: Dict[str, float]) -> Dict[str, float]:
    """Modeled CPU utilisation per service: threads · per-request share / total replica CPU."""
    return {
        s.name: threads * cpu_per_request.get(s.name, 0.0) / (s.replicas * s.req_cpu)
        for s in app.services
    }


def autoscale_step(
    app: AppGraph,
    threads: int,
    cpu_per_request: Dict[str, float],
    threshold: float,
) -> Tuple[Dict[str, int], List[str]]:
    """
    Replica deltas (+1 above threshold, −1 below threshold/2, both strict) and the
    services that wanted to grow but sit at max_replicas.
    """
    deltas: Dict[str, int] = {}
    capped: List[str] = []
    utils = utilization(app, threads, cpu_per_request)
    for spec in app.services:
        util = utils[spec.name]
        if util > threshold:
            if spec.replicas < spec.max_replicas:
                deltas[spec.name] = 1
            else:
                capped.append(spec.name)
        elif util < threshold / 2 and spec.replicas > 1:
            deltas[spec.name] = -1
    return deltas, capped


# ── Summary ──────────────────────────────────────────────────

def summarize(values: Sequence[float], slo_ms: float, window: int = MOVING_AVERAGE_WINDOW) -> SeriesSummary:
    """
    Mean, strict fraction under slo_ms, trailing moving average, and spikes: points
    more than 20 % above the moving average of the points before them.
    """
    series = pd.Series(list(values), dtype=float)
    if series.empty:
        raise ConfigError("cannot summarize an empty series")
    moving = series.rolling(window, min_periods=1).mean()
    previous = moving.shift(1)
    spikes = int((series > SPIKE_RATIO * previous).sum())
    return SeriesSummary(
        count=len(series),
        mean=float(series.mean()),
        slo_ms=slo_ms,
        fraction_under_slo=float((series < slo_ms).mean()),
        spike_count=spikes,
        moving_average=moving.tolist(),
    )


# ── Cluster state ────────────────────────────────────────────

class _Cluster:
    """Live app + topology + placement rows for one scenario run."""

    def __init__(self, app: AppGraph, topology: Topology, scheduler: str, rng: np.random.Generator) -> None:
        self.app = app
        self.topology = topology
        self.scheduler = scheduler
        self.rng = rng
        self.rows = [list(r) for r in heuristic_place(app, topology, scheduler, rng).assignment]

    @property
    def placement(self) -> Placement:
        return Placement(assignment=self.rows)

    def kill(self, node: int) -> List[Tuple[int, int]]:
        if not 0 <= node < self.topology.n_nodes:
            raise ConfigError(f"scenario kills unknown node {node}")
        self.topology.kill(node)
        displaced = []
        for service, row in enumerate(self.rows):
            spec = self.app.services[service]
            for replica, host in enumerate(row):
                if host == node:
                    self.topology.release(node, spec.req_cpu, spec.req_mem)
                    row[replica] = -1
                    displaced.append((service, replica))
        return displaced

    def heal(self, displaced: List[Tuple[int, int]]) -> None:
        try:
            chosen = place_instances(self.app, self.topology, self.scheduler, displaced, self.rng)
        except InfeasibleError as e:
            raise InfeasibleError(
                f"self-healing failed: {e.message}", diagnostics={**e.diagnostics, "displaced": displaced}
            ) from e
        for (service, replica), node in chosen.items():
            self.rows[service][replica] = node

    def scale(self, service: int, delta: int) -> bool:
        """Add or remove the last replica. A replica with no node to go to is not added."""
        spec = self.app.services[service]
        new_count = spec.replicas + delta
        node = -1
        if delta > 0:
            slot = (service, spec.replicas)
            try:
                node = place_instances(self.app, self.topology, self.scheduler, [slot], self.rng)[slot]
            except InfeasibleError as e:
                log.warning("cannot add a '%s' replica: %s", spec.name, e.message)
                return False
        services = list(self.app.services)
        services[service] = spec.model_copy(update={"replicas": new_count})
        self.app = self.app.with_services(services)
        if delta > 0:
            self.rows[service].append(node)
        else:
            self.topology.release(self.rows[service].pop(), spec.req_cpu, spec.req_mem)
        return True

    def apply_plan(self, plan: ReschedulePlan) -> bool:
        """Execute the plan on the live topology; a rejected plan changes nothing."""
        ok, message = Planner(self.app, self.topology).execute_plan(plan, self.topology)
        if not ok:
            log.warning("rescheduling plan not applied: %s", message)
            return False
        for move in plan.moves:
            self.rows[self.app.service_id(move.service)][move.replica] = move.target
        return True

    def background_only(self) -> Topology:
        """Copy of the topology without this app's requests."""
        topo = self.topology.clone()
        self.app.release_placement(self.placement, topo)
        return topo

    def d_msa(self) -> float:
        return LatencyModel(self.app, self.topology).evaluate(self.rows)


# ── Runner ───────────────────────────────────────────────────

def _reschedule(cluster: _Cluster, agent: Agent, scenario: Scenario) -> Optional[ReschedulePlan]:
    s_max = int(agent.meta().get("s_max", 20))
    if total_instances(cluster.app) > s_max:
        log.warning("skipping rescheduling: %d instances exceed the checkpoint's s_max %d",
                    total_instances(cluster.app), s_max)
        return None
    config = EnvConfig(s_max=s_max, max_steps=scenario.max_steps, penalty_cost=scenario.penalty_cost)
    return Planner(cluster.app, cluster.background_only(), config).plan(agent, cluster.placement)


def overhead_report(
    moves: List[Tuple[int, str]],
    active_pods: int,
    churn_limit: int,
    churn_window: Optional[int] = None,
) -> OverheadReport:
    """moves: (tick, 'service[replica]') for every non-idle rescheduling action."""
    per_instance: Dict[str, List[int]] = {}
    for tick, key in moves:
        per_instance.setdefault(key, []).append(tick)
    churn = False
    for ticks in per_instance.values():
        window = churn_window if churn_window is not None else np.inf
        for i in range(len(ticks) - churn_limit):
            if ticks[i + churn_limit] - ticks[i] <= window:
                churn = True
    moved = len(per_instance)
    return OverheadReport(
        actions=len(moves),
        moved_instances=moved,
        active_pods=active_pods,
        fraction_moved=min(1.0, moved / active_pods) if active_pods else 0.0,
        max_moves_per_instance=max((len(t) for t in per_instance.values()), default=0),
        churn=churn,
        moves_per_instance={k: len(t) for k, t in per_instance.items()},
    )


def run_scenario(
    scenario: Scenario,
    topology: Topology,
    agent: Optional[Agent] = None,
    app: Optional[AppGraph] = None,
) -> ScenarioResult:
    """
    Run a scenario on a private copy of `topology`. The rescheduler is `agent`, or the
    scenario's checkpoint path, or nothing.
    """
    if agent is None and scenario.rescheduler:
        agent = load_agent(scenario.rescheduler)
    app = app or resolve_app(scenario.app, replicas=scenario.replicas)
    noise = np.random.default_rng(scenario.noise_seed)
    cluster = _Cluster(app, topology.clone(), scenario.initial_scheduler,
                       np.random.default_rng([scenario.noise_seed, 1]))

    by_tick: Dict[int, List[ScenarioEvent]] = {}
    for event in scenario.events:
        by_tick.setdefault(event.tick, []).append(event)

    threads = scenario.threads
    threshold: Optional[float] = None
    series = TimeSeries(replicas={s.name: [] for s in app.services})
    plans: List[ReschedulePlan] = []
    moves: List[Tuple[int, str]] = []
    max_active = total_instances(app)

    for tick in range(scenario.duration):
        markers: List[str] = []
        changed = tick == 0
        for event in by_tick.get(tick, []):
            if event.kind == "kill_node":
                displaced = cluster.kill(event.node)
                markers.append(f"kill:{event.node}")
                if displaced:
                    cluster.heal(displaced)
                    markers.append(f"heal:{len(displaced)}")
                changed = True
            elif event.kind == "set_threads":
                threads = event.threads
                markers.append(f"threads:{threads}")
            else:
                threshold = event.threshold if event.enabled else None
                markers.append("autoscale:on" if threshold else "autoscale:off")

        if threshold is not None:
            deltas, capped = autoscale_step(cluster.app, threads, scenario.cpu_per_request, threshold)
            for name, delta in deltas.items():
                if cluster.scale(cluster.app.service_id(name), delta):
                    markers.append(f"scale:{name}{delta:+d}")
                    changed = True
                else:
                    markers.append(f"noroom:{name}")
            for name in capped:
                markers.append(f"max:{name}")
            if capped:
                log.warning("tick %d: %s at max_replicas", tick, ", ".join(capped))
        max_active = max(max_active, total_instances(cluster.app))

        moved_now = 0
        if changed and agent is not None:
            plan = _reschedule(cluster, agent, scenario)
            if plan is not None and not cluster.apply_plan(plan):
                markers.append("resched:rejected")
            elif plan is not None:
                plans.append(plan)
                moved_now = len(plan.moves)
                moves.extend((tick, f"{m.service}[{m.replica}]") for m in plan.moves)
                if plan.moves:
                    markers.append(f"resched:{len(plan.moves)}")

        d = cluster.d_msa()
        observed = d * (1.0 + noise.uniform(-scenario.noise_amplitude, scenario.noise_amplitude))
        if moved_now and scenario.handover_spike_ms:
            observed += scenario.handover_spike_ms
        series.ticks.append(tick)
        series.d_msa.append(d)
        series.observed.append(observed)
        series.rps.append(threads * 1000.0 / observed)
        series.threads.append(threads)
        for spec in cluster.app.services:
            series.replicas[spec.name].append(spec.replicas)
        series.markers.append(";".join(markers))

    overhead = overhead_report(moves, max_active, scenario.churn_limit, scenario.churn_window)
    log.info("scenario %s: mean observed %.1f ms, %d rescheduling actions",
             scenario.name, float(np.mean(series.observed)), overhead.actions)
    return ScenarioResult(
        scenario=scenario.name,
        series=series,
        overhead=overhead,
        summary=summarize(series.observed, scenario.slo_ms),
        plans=plans,
    )


def plot_frame(series: TimeSeries) -> pd.DataFrame:
    """Long-form (tick, value, marker) table for external plotting."""
    return pd.DataFrame({"tick": series.ticks, "value": series.observed, "marker": series.markers})


def _run_one(args: Tuple[Scenario, Topology, Optional[Union[str, Path]]]) -> ScenarioResult:
    scenario, topology, checkpoint = args
    agent = load_agent(checkpoint) if checkpoint else None
    return run_scenario(scenario, topology, agent)


def run_scenarios(
    scenarios: Sequence[Scenario],
    topology: Topology,
    checkpoint: Optional[Union[str, Path]] = None,
    workers: int = 1,
) -> List[ScenarioResult]:
    """Independent scenarios, optionally across processes. Order of results follows input."""
    jobs = [(s, topology, checkpoint) for s in scenarios]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_one, jobs))
    return [_run_one(job) for job in jobs]
