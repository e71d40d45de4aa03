"""
CONTINUUM-FORGE — Run Screen
Manifest status and the artifact list.
"""

from __future__ import annotations
from textual.app import ComposeResult
from textual.containers import Container, ScrollableContainer
from textual.widgets import Static, TabbedContent, TabPane

from ..errors import ConfigError
from ..workbench import Workbench
from . import empty_panel


class RunScreen(Container):
    """Run overview: what produced this directory and what it holds."""

    def __init__(self, bench: Workbench) -> None:
        super().__init__()
        self.bench = bench

    def compose(self) -> ComposeResult:
        yield Static("  ◈  RUN  —  Manifest & Artifacts", classes="section-title")
        with TabbedContent(id="run-tabs"):
            with TabPane("  Status  ", id="tab-status"):
                yield self._build_status_tab()
            with TabPane("  Arguments  ", id="tab-args"):
                yield self._build_args_tab()
            with TabPane("  Artifacts  ", id="tab-artifacts"):
                yield self._build_artifacts_tab()

    def _build_status_tab(self) -> Container:
        try:
            status = self.bench.status_summary()
        except ConfigError as e:
            return empty_panel(e.message)
        rows = "\n".join(f"[#bb9af7]{k:14}[/]  [#9ece6a]{v}[/]" for k, v in status.items())
        return Container(
            Static(
                f"[bold #7dcfff]Run Directory[/]\n"
                f"[#565f89]{self.bench.root}[/]\n\n"
                f"[bold #7dcfff]Manifest[/]\n{rows}",
                id="run-status",
            ),
            classes="panel",
        )

    def _build_args_tab(self) -> Container:
        try:
            args = self.bench.load_manifest().args
        except ConfigError as e:
            return empty_panel(e.message)
        if not args:
            return empty_panel("No arguments recorded.")
        return ScrollableContainer(
            *[Static(f"  [#bb9af7]{k:16}[/]  [#c0caf5]{v}[/]") for k, v in sorted(args.items())],
            classes="panel",
        )

    def _build_artifacts_tab(self) -> Container:
        files = self.bench.artifacts()
        if not files:
            return empty_panel("Run directory is empty.")
        lines = []
        for path in files:
            size = path.stat().st_size
            lines.append(f"  [#7aa2f7]{path.relative_to(self.bench.root)}[/]  [#565f89]{size:,} B[/]")
        return ScrollableContainer(Static("\n".join(lines), id="artifact-list"), classes="panel")
