"""
CONTINUUM-FORGE — Splash Screen
Figlet banner plus a short scan of the run directory.
"""

from __future__ import annotations
import asyncio
from pathlib import Path

import pyfiglet
from rich.text import Text
from textual import work
from textual.app import ComposeResult
from textual.containers import Center, Middle
from textual.screen import Screen
from textual.widgets import ProgressBar, Static

from .. import __version__

GRADIENT = ["#7aa2f7", "#7dcfff", "#bb9af7", "#9ece6a"]

SCAN_STEPS = [
    ("◈ Reading manifest...           ", 0.25),
    ("◈ Indexing artifacts...         ", 0.55),
    ("◈ Loading series...             ", 0.85),
    ("◈ Dashboard is ready.           ", 1.00),
]


def banner(text: str = "CONTINUUM", font: str = "small") -> Text:
    """Figlet art with one colour per band of lines."""
    art = pyfiglet.figlet_format(text, font=font)
    rich_text = Text()
    lines = art.rstrip("\n").split("\n")
    band = max(1, len(lines) // len(GRADIENT))
    for i, line in enumerate(lines):
        rich_text.append(line + "\n", style=GRADIENT[min(i // band, len(GRADIENT) - 1)])
    return rich_text


class SplashScreen(Screen):
    def __init__(self, run_dir: Path) -> None:
        super().__init__()
        self.run_dir = run_dir

    def compose(self) -> ComposeResult:
        with Middle(id="splash-screen"):
            with Center():
                yield Static(banner(), id="splash-ascii")
            with Center():
                yield Static(
                    f"  ◆  Microservice Rescheduling Workbench  ·  v{__version__}  ◆",
                    id="splash-tagline",
                )
                yield Static(f"   {self.run_dir}", classes="label-dim")
            with Center(id="splash-loading"):
                yield Static("", id="splash-status")
                yield ProgressBar(total=100, show_eta=False, id="splash-progress")

    def on_mount(self) -> None:
        self.run_scan()

    @work(exclusive=True)
    async def run_scan(self) -> None:
        progress = self.query_one("#splash-progress", ProgressBar)
        status = self.query_one("#splash-status", Static)
        for msg, pct in SCAN_STEPS:
            status.update(f"[#565f89]{msg}[/]")
            progress.progress = int(pct * 100)
            await asyncio.sleep(0.15)
        status.update("[#9ece6a]✓ Press any key to open the run[/]")

    def on_key(self, event) -> None:
        event.stop()
        self.app.pop_screen()
