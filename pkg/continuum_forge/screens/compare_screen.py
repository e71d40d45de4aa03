"""
CONTINUUM-FORGE — Compare Screen
Scheduler comparison table, best scheduler per replica count highlighted.
"""

from __future__ import annotations
from rich.text import Text
from textual.app import ComposeResult
from textual.containers import Container
from textual.widgets import DataTable, Static

from ..workbench import Workbench
from . import empty_panel


class CompareScreen(Container):

    def __init__(self, bench: Workbench) -> None:
        super().__init__()
        self.bench = bench

    def compose(self) -> ComposeResult:
        yield Static("  ⬡  COMPARE  —  Mean D_msa per Scheduler", classes="section-title")
        frame = self.bench.read_csv("comparison.csv")
        if frame is None or frame.empty:
            yield empty_panel("No comparison.csv here; run `continuum-forge compare --out`.")
            return
        yield DataTable(id="compare-table", zebra_stripes=True)

    def on_mount(self) -> None:
        frame = self.bench.read_csv("comparison.csv")
        if frame is None or frame.empty:
            return
        table = self.query_one("#compare-table", DataTable)
        table.add_columns(*frame.columns)
        best = frame.groupby("replicas")["mean_d_msa"].transform("min")
        for (_, row), low in zip(frame.iterrows(), best):
            cells = [f"{v:.2f}" if isinstance(v, float) else str(v) for v in row]
            if row["mean_d_msa"] == low:
                cells = [Text(c, style="bold #9ece6a") for c in cells]
            table.add_row(*cells)
