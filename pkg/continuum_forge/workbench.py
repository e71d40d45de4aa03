"""
CONTINUUM-FORGE — Workbench
Output-directory store: guarded writes, run manifests, artifact hashing.
"""

from __future__ import annotations
import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union

import pandas as pd
from pydantic import BaseModel, ValidationError

from . import __version__
from .errors import ConfigError, OutputExistsError
from .models import RunManifest

MANIFEST_FILE = "manifest.json"
# Files whose content legitimately differs between identical runs.
UNHASHED = {MANIFEST_FILE, "timing.csv"}


class Workbench:
    """
    One run's output directory. Every artifact goes through here so the
    overwrite guard and the manifest hash see all of them.
    """

    def __init__(self, out_dir: Union[str, Path], force: bool = False) -> None:
        self.root = Path(out_dir)
        self.force = force
        self._written: List[str] = []

    # ── Bootstrap ────────────────────────────────────────────

    def ensure_dir(self) -> None:
        self.root.mkdir(parents=True, exist_ok=True)

    def guard(self, names: Iterable[str]) -> None:
        """Refuse to run when any planned output exists, unless forced."""
        existing = [n for n in names if (self.root / n).exists()]
        if existing and not self.force:
            raise OutputExistsError(
                f"{self.root} already holds {', '.join(sorted(existing))}; pass --force to overwrite"
            )

    def path(self, name: str) -> Path:
        return self.root / name

    # ── Writers ──────────────────────────────────────────────

    def _target(self, name: str) -> Path:
        target = self.root / name
        if target.exists() and not self.force and name not in self._written:
            raise OutputExistsError(f"{target} exists; pass --force to overwrite")
        target.parent.mkdir(parents=True, exist_ok=True)
        if name not in self._written:
            self._written.append(name)
        return target

    def write_text(self, name: str, text: str) -> Path:
        target = self._target(name)
        target.write_text(text, encoding="utf-8")
        return target

    def write_json(self, name: str, payload: Union[BaseModel, Dict[str, Any], List[Any]]) -> Path:
        if isinstance(payload, BaseModel):
            text = payload.model_dump_json(indent=2, by_alias=True)
        else:
            text = json.dumps(payload, indent=2, sort_keys=True, default=str)
        return self.write_text(name, text + "\n")

    def write_csv(self, name: str, frame: pd.DataFrame) -> Path:
        target = self._target(name)
        frame.to_csv(target, index=False, float_format="%.10g", lineterminator="\n")
        return target

    def register(self, name: str) -> Path:
        """Claim a path written by someone else (checkpoints, trajectory logs)."""
        return self._target(name)

    # ── Manifest ─────────────────────────────────────────────

    def artifact_hash(self) -> str:
        digest = hashlib.sha256()
        for name in sorted(n for n in self._written if n not in UNHASHED):
            digest.update(name.encode())
            digest.update(b"\0")
            digest.update((self.root / name).read_bytes())
        return digest.hexdigest()

    def write_manifest(
        self,
        command: str,
        args: Dict[str, Any],
        config_paths: Optional[Dict[str, str]] = None,
        seed: int = 0,
    ) -> RunManifest:
        manifest = RunManifest(
            command=command,
            config_paths=config_paths or {},
            args={k: v for k, v in args.items() if v is not None},
            seed=seed,
            artifact_hash=self.artifact_hash(),
            output_dir=str(self.root),
            version=__version__,
        )
        self.write_json(MANIFEST_FILE, manifest)
        return manifest

    def load_manifest(self) -> RunManifest:
        path = self.root / MANIFEST_FILE
        if not path.exists():
            raise ConfigError(f"{self.root} has no {MANIFEST_FILE}; not a continuum-forge run directory")
        try:
            return RunManifest.model_validate_json(path.read_text(encoding="utf-8"))
        except ValidationError as e:
            raise ConfigError(f"{path}: unreadable manifest\n{e}") from e

    # ── Reading back (dashboard) ─────────────────────────────

    def artifacts(self) -> List[Path]:
        if not self.root.exists():
            return []
        return sorted(p for p in self.root.rglob("*") if p.is_file())

    def read_csv(self, name: str) -> Optional[pd.DataFrame]:
        path = self.root / name
        return pd.read_csv(path) if path.exists() else None

    def read_json(self, name: str) -> Optional[Any]:
        path = self.root / name
        return json.loads(path.read_text(encoding="utf-8")) if path.exists() else None

    def status_summary(self) -> Dict[str, str]:
        manifest = self.load_manifest()
        result = {
            "Command": manifest.command,
            "Seed": str(manifest.seed),
            "Version": manifest.version or "?",
            "Artifacts": str(len(self.artifacts())),
            "Hash": manifest.artifact_hash[:16],
        }
        for key, value in manifest.config_paths.items():
            result[key.capitalize()] = value
        return result
