"""
CONTINUUM-FORGE — Errors
One hierarchy for the whole package. Each class carries the CLI exit code.
"""

from __future__ import annotations
from typing import Any, Dict, Optional


class ForgeError(Exception):
    """Base class. `exit_code` is what the CLI returns when this escapes."""

    exit_code: int = 1

    def __init__(self, message: str, *, diagnostics: Optional[Dict[str, Any]] = None) -> None:
        super().__init__(message)
        self.message = message
        self.diagnostics: Dict[str, Any] = diagnostics or {}


# ── Configuration (exit 2) ────────────────────────────────────────────────────

class ConfigError(ForgeError):
    exit_code = 2


class TopologyError(ConfigError):
    pass


class AppGraphError(ConfigError):
    pass


class CycleError(AppGraphError):
    pass


class PlacementError(ConfigError):
    """Placement does not match the app, references a dead/unknown node, or overcommits a node."""


class ActionError(ConfigError):
    pass


class CheckpointError(ConfigError):
    pass


class OutputExistsError(ConfigError):
    pass


class OracleLimitError(ConfigError):
    pass


class CapacityError(ForgeError):
    """Commit beyond capacity or release below zero."""

    exit_code = 2


# ── Runtime ───────────────────────────────────────────────────────────────────

class InfeasibleError(ForgeError):
    exit_code = 3


class NumericalError(ForgeError):
    exit_code = 4
