"""
CONTINUUM-FORGE — Report Screen
Plan, oracle, latency breakdown and evaluation files, whichever exist.
"""

from __future__ import annotations
import json

from rich.syntax import Syntax
from textual.app import ComposeResult
from textual.containers import Container, ScrollableContainer
from textual.widgets import Static, TabbedContent, TabPane

from ..models import ReschedulePlan
from ..workbench import Workbench
from . import empty_panel

REPORTS = [
    ("plan.json", "Plan"),
    ("oracle.json", "Oracle"),
    ("latency.json", "Latency"),
    ("evaluation.json", "Evaluation"),
    ("stats.json", "Stats"),
]


class ReportScreen(Container):

    def __init__(self, bench: Workbench) -> None:
        super().__init__()
        self.bench = bench

    def compose(self) -> ComposeResult:
        yield Static("  ≡  REPORTS", classes="section-title")
        present = [(f, t) for f, t in REPORTS if self.bench.path(f).exists()]
        if not present:
            yield empty_panel("No plan, oracle, latency or evaluation reports in this run.")
            return
        with TabbedContent(id="report-tabs"):
            for filename, title in present:
                with TabPane(f"  {title}  ", id=f"tab-{filename.split('.')[0]}"):
                    yield self._build_report(filename)

    def _build_report(self, filename: str) -> ScrollableContainer:
        payload = self.bench.read_json(filename)
        children = []
        if filename == "plan.json":
            plan = ReschedulePlan.model_validate(payload)
            children.append(Static(plan.summary(), classes="panel"))
            children.extend(
                Static(f"  [#565f89]{m.step:>3}[/]  [#7aa2f7]{m.service}[{m.replica}][/]  "
                       f"{m.source} → {m.target}  [#9ece6a]{m.d_msa_after:.2f} ms[/]")
                for m in plan.moves
            )
        children.append(Static(Syntax(json.dumps(payload, indent=2), "json", theme="monokai")))
        return ScrollableContainer(*children, classes="panel")
