"""
CONTINUUM-FORGE — Dashboard
Read-only Textual browser over one run directory.
"""

from __future__ import annotations
from pathlib import Path
from typing import Union

from textual.app import App, ComposeResult
from textual.containers import Container, Horizontal, Vertical
from textual.reactive import reactive
from textual.widgets import Button, Footer, Header, Static

from . import __version__
from .errors import ConfigError
from .screens.splash import SplashScreen
from .screens.run_screen import RunScreen
from .screens.training_screen import TrainingScreen
from .screens.compare_screen import CompareScreen
from .screens.scenario_screen import ScenarioScreen
from .screens.report_screen import ReportScreen
from .workbench import Workbench


NAV_ITEMS = [
    ("run",       "◈  Run",        "Manifest & Artifacts"),
    ("training",  "⊕  Training",   "Learning Curve"),
    ("compare",   "⬡  Compare",    "Scheduler Comparison"),
    ("scenarios", "◉  Scenarios",  "Latency Over Time"),
    ("reports",   "≡  Reports",    "Plans · Oracle · Latency"),
]


class ForgeApp(App):
    """CONTINUUM-FORGE — run dashboard."""

    CSS_PATH = "themes/forge.tcss"
    TITLE = "CONTINUUM-FORGE"
    SUB_TITLE = f"Rescheduling Workbench v{__version__}"

    BINDINGS = [
        ("q", "quit", "Quit"),
        ("f1", "nav_run", "Run"),
        ("f2", "nav_training", "Training"),
        ("f3", "nav_compare", "Compare"),
        ("f4", "nav_scenarios", "Scenarios"),
        ("f5", "nav_reports", "Reports"),
        ("r", "refresh_view", "Refresh"),
    ]

    active_section: reactive[str] = reactive("run")

    def __init__(self, run_dir: Union[str, Path], splash: bool = True) -> None:
        super().__init__()
        self.bench = Workbench(run_dir)
        self.splash = splash

    # ── Compose ──────────────────────────────────────────────

    def compose(self) -> ComposeResult:
        yield Header(show_clock=True)

        with Horizontal(id="app-grid"):
            with Vertical(id="sidebar"):
                yield Static("  ◆ CONTINUUM-FORGE ◆", id="sidebar-logo")
                yield Static("  RESCHEDULING\n  WORKBENCH", id="sidebar-title")
                yield Static("")
                yield Static("  VIEWS", classes="nav-section-label")
                for section_id, label, _ in NAV_ITEMS:
                    yield Button(f"  {label}", id=f"nav-{section_id}", classes="nav-item")
                yield Static(self._build_status_line(), id="sidebar-status")

            with Vertical(id="main-content"):
                with Horizontal(id="top-bar"):
                    yield Static("", id="top-bar-title")
                    yield Static("", id="breadcrumb")
                yield Container(id="content-area")

        yield Footer()

    # ── Lifecycle ─────────────────────────────────────────────

    def on_mount(self) -> None:
        self._load_section("run")
        if self.splash:
            self.push_screen(SplashScreen(self.bench.root))

    def _build_status_line(self) -> str:
        try:
            command = self.bench.load_manifest().command
        except ConfigError:
            return "  [#f7768e]●[/] [#565f89]no manifest[/]"
        return f"  [#9ece6a]●[/] [#565f89]{command}[/]"

    # ── Navigation ────────────────────────────────────────────

    def _update_nav(self) -> None:
        for section_id, _, _ in NAV_ITEMS:
            btn = self.query_one(f"#nav-{section_id}", Button)
            btn.set_class(section_id == self.active_section, "active")

    def _load_section(self, section_id: str) -> None:
        if isinstance(self.screen, SplashScreen):
            self.pop_screen()
        self.active_section = section_id
        self._update_nav()

        label, crumb = next((lbl, c) for s, lbl, c in NAV_ITEMS if s == section_id)
        self.query_one("#top-bar-title", Static).update(f"[bold #7dcfff]{label.upper()}[/]")
        self.query_one("#breadcrumb", Static).update(f"[#565f89]  ›  {crumb}[/]")

        content_area = self.query_one("#content-area")
        content_area.remove_children()
        content_area.mount(self._build_section(section_id))

    def _build_section(self, section_id: str) -> Container:
        if section_id == "training":
            return TrainingScreen(self.bench)
        if section_id == "compare":
            return CompareScreen(self.bench)
        if section_id == "scenarios":
            return ScenarioScreen(self.bench)
        if section_id == "reports":
            return ReportScreen(self.bench)
        return RunScreen(self.bench)

    # ── Events ────────────────────────────────────────────────

    def on_button_pressed(self, event: Button.Pressed) -> None:
        bid = event.button.id or ""
        if bid.startswith("nav-"):
            self._load_section(bid[len("nav-"):])

    # ── Actions ───────────────────────────────────────────────

    def action_nav_run(self) -> None:
        self._load_section("run")

    def action_nav_training(self) -> None:
        self._load_section("training")

    def action_nav_compare(self) -> None:
        self._load_section("compare")

    def action_nav_scenarios(self) -> None:
        self._load_section("scenarios")

    def action_nav_reports(self) -> None:
        self._load_section("reports")

    def action_refresh_view(self) -> None:
        self._load_section(self.active_section)
        self.notify("✓ Refreshed", severity="information")
