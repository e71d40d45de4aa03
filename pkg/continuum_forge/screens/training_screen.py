"""
CONTINUUM-FORGE — Training Screen
Learning curve of a train run.
"""

from __future__ import annotations
from textual.app import ComposeResult
from textual.containers import Container
from textual.widgets import Sparkline, Static

from ..workbench import Workbench
from . import empty_panel


class TrainingScreen(Container):

    def __init__(self, bench: Workbench) -> None:
        super().__init__()
        self.bench = bench

    def compose(self) -> ComposeResult:
        yield Static("  ⊕  TRAINING  —  Episode Reward", classes="section-title")
        curve = self.bench.read_csv("curve.csv")
        if curve is None or curve.empty:
            yield empty_panel("No curve.csv here; run `continuum-forge train` into this directory.")
            return
        stats = self.bench.read_json("stats.json") or {}
        last = curve.iloc[-1]
        yield Static(
            f"[bold #7dcfff]{stats.get('agent', '?').upper()}[/]  "
            f"[#bb9af7]steps[/] {int(last['step']):,}  "
            f"[#bb9af7]episodes[/] {int(last['episode']):,}  "
            f"[#bb9af7]reward (moving avg)[/] [#9ece6a]{last['moving_average']:.2f}[/]",
            id="training-header",
            classes="panel",
        )
        yield Static("[#565f89]moving average[/]")
        yield Sparkline(curve["moving_average"].tolist(), summary_function=max, id="curve-average")
        yield Static("[#565f89]per-episode reward[/]")
        yield Sparkline(curve["reward"].tolist(), summary_function=max, id="curve-reward")
