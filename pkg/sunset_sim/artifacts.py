# sunset_sim/artifacts.py
"""Output directory management for runs and sweeps."""

import json
import logging
import os
from pathlib import Path
from typing import Any

from .errors import SunsetError

logger = logging.getLogger(__name__)


class ArtifactExistsError(SunsetError):
    """A run directory already holds artifacts and overwriting was not allowed."""


class ArtifactStore:
    """
    Owns an output directory.

    Creates it on demand, turns run ids into safe directory names, and
    refuses to overwrite an existing run's artifacts unless ``overwrite``.
    """

    EVENT_LOG = "events.jsonl"
    REPORT = "report.json"

    def __init__(self, out_dir: str | Path, overwrite: bool = False):
        self.out_dir = Path(out_dir)
        self.overwrite = overwrite
        self.out_dir.mkdir(parents=True, exist_ok=True)

    def run_dir(self, run_id: str, parent: str = "") -> Path:
        """
        Directory for one run's artifacts, created if missing.

        Args:
            run_id: Run identifier (sanitised into a directory name)
            parent: Optional sub-directory, e.g. "runs" for sweeps

        Returns:
            Path to the run directory
        """
        base = self.out_dir / parent if parent else self.out_dir
        path = base / self._sanitize_name(run_id)
        if (path / self.EVENT_LOG).exists() and not self.overwrite:
            raise ArtifactExistsError(f"{path} already holds run artifacts (use --force to overwrite)")
        path.mkdir(parents=True, exist_ok=True)
        return path

    def file(self, name: str) -> Path:
        """A top-level file in the output directory, guarded like run dirs."""
        path = self.out_dir / self._sanitize_name(name)
        if path.exists() and not self.overwrite:
            raise ArtifactExistsError(f"{path} already exists (use --force to overwrite)")
        return path

    def write_json(self, path: Path, data: Any) -> Path:
        path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        logger.debug(f"Wrote {path}")
        return path

    @staticmethod
    def _sanitize_name(name: str) -> str:
        """Strip path components and anything but alphanumerics and ._-"""
        safe = os.path.basename(name.replace("\\", "/"))
        safe = "".join(c if (c.isalnum() or c in "._-") else "_" for c in safe)
        safe = safe.lstrip(".")
        if len(safe) > 200:
            safe = safe[:200]
        return safe or "unnamed"
