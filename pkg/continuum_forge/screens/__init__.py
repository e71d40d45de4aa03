"""CONTINUUM-FORGE Screens"""

from textual.containers import ScrollableContainer
from textual.widgets import Static


def empty_panel(message: str) -> ScrollableContainer:
    return ScrollableContainer(Static(f"[#565f89]{message}[/]"), classes="panel")
