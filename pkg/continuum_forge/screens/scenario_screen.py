"""
CONTINUUM-FORGE — Scenario Screen
One tab per scenario: latency sparkline, SLO summary, overhead, event markers.
"""

from __future__ import annotations
from typing import List

from textual.app import ComposeResult
from textual.containers import Container, ScrollableContainer
from textual.widgets import Sparkline, Static, TabbedContent, TabPane

from ..workbench import Workbench
from . import empty_panel


class ScenarioScreen(Container):

    def __init__(self, bench: Workbench) -> None:
        super().__init__()
        self.bench = bench

    def scenario_names(self) -> List[str]:
        if not self.bench.root.exists():
            return []
        return sorted(p.parent.name for p in self.bench.root.glob("*/series.csv"))

    def compose(self) -> ComposeResult:
        yield Static("  ◉  SCENARIOS  —  Latency Over Time", classes="section-title")
        names = self.scenario_names()
        if not names:
            yield empty_panel("No scenario series here; run `continuum-forge scenario --out`.")
            return
        with TabbedContent(id="scenario-tabs"):
            for name in names:
                with TabPane(f"  {name}  ", id=f"tab-{name}"):
                    yield self._build_scenario(name)

    def _build_scenario(self, name: str) -> ScrollableContainer:
        series = self.bench.read_csv(f"{name}/series.csv")
        summary = self.bench.read_json(f"{name}/summary.json") or {}
        overhead = self.bench.read_json(f"{name}/overhead.json") or {}
        markers = [
            f"  [#e0af68]t={int(t):>4}[/]  {m}"
            for t, m in zip(series["tick"], series["marker"].fillna(""))
            if m
        ]
        header = (
            f"[bold #7dcfff]{name}[/]  "
            f"[#bb9af7]mean[/] {summary.get('mean', float('nan')):.2f} ms  "
            f"[#bb9af7]< SLO {summary.get('slo_ms', 0):.0f} ms[/] "
            f"[#9ece6a]{100 * summary.get('fraction_under_slo', 0):.1f}%[/]  "
            f"[#bb9af7]spikes[/] {summary.get('spike_count', 0)}  "
            f"[#bb9af7]actions[/] {overhead.get('actions', 0)}  "
            f"[#bb9af7]moved[/] {100 * overhead.get('fraction_moved', 0):.1f}%"
        )
        if overhead.get("churn"):
            header += "  [#f7768e]churn[/]"
        return ScrollableContainer(
            Static(header, classes="scenario-header"),
            Static("[#565f89]observed latency[/]"),
            Sparkline(series["observed"].tolist(), summary_function=max, classes="scenario-spark"),
            Static("[#565f89]moving average[/]"),
            Sparkline(summary.get("moving_average") or [0.0], summary_function=max, classes="scenario-spark"),
            Static("\n".join(markers) or "[#565f89]no events[/]", classes="scenario-markers"),
            classes="panel",
        )
