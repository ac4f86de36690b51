# sunset_sim/logging_setup.py
"""
Application logging for the simulator (not the per-run event log).

Handlers, all under the configured log directory (default <repo>/logs/):

  app.log       every logger, human-readable, rotating
  events.jsonl  channel ``sunset.events``: CLI commands, run and sweep progress
  sim.jsonl     channel ``sunset.sim``: adaptation outcomes, injections,
                rejected commands

Structured lines carry the id of the run being executed (see ``run_context``)
so lines from a sweep's worker processes can be told apart after the fact.

A run's own ``events.jsonl`` inside its output directory is written by
``EventLog`` and never passes through here: it holds virtual time only and
must stay byte-comparable between runs.
"""

from __future__ import annotations

import contextlib
import contextvars
import json
import logging
import logging.handlers
import os
import threading
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterator, Optional

REPO_DIR = Path(__file__).resolve().parent.parent
CONFIG_PATH = REPO_DIR / "logging_config.json"

DEFAULT_CONFIG: dict[str, Any] = {
    "enabled": True,
    "log_dir": "logs",
    "console_level": "INFO",
    "file_level": "DEBUG",
    "max_file_size_mb": 10,
    "backup_count": 5,
}

# channel logger -> file name
CHANNELS = {"sunset.events": "events.jsonl", "sunset.sim": "sim.jsonl"}

event_logger = logging.getLogger("sunset.events")
sim_logger = logging.getLogger("sunset.sim")

_initialised = False
_init_lock = threading.Lock()
_config_cache: Optional[dict[str, Any]] = None
_current_run: contextvars.ContextVar[Optional[str]] = contextvars.ContextVar("sunset_run", default=None)


def deep_merge(dst: dict, src: dict) -> None:
    """Merge ``src`` into ``dst`` in place; nested dicts merge, others replace."""
    for key, value in src.items():
        if isinstance(value, dict) and isinstance(dst.get(key), dict):
            deep_merge(dst[key], value)
        else:
            dst[key] = value


def load_config(force: bool = False) -> dict[str, Any]:
    global _config_cache
    if _config_cache is not None and not force:
        return _config_cache

    cfg = json.loads(json.dumps(DEFAULT_CONFIG))
    if CONFIG_PATH.exists():
        try:
            deep_merge(cfg, json.loads(CONFIG_PATH.read_text(encoding="utf-8")))
        except (OSError, ValueError) as e:
            print(f"[logging_setup] WARNING: ignoring {CONFIG_PATH}: {e}")
    cfg.pop("_comment", None)

    log_dir = Path(cfg["log_dir"])
    cfg["log_dir"] = str(log_dir if log_dir.is_absolute() else REPO_DIR / log_dir)
    _config_cache = cfg
    return cfg


def _level(name: str, fallback: int) -> int:
    return getattr(logging, str(name).upper(), fallback)


class _JsonLineFormatter(logging.Formatter):
    """One JSON object per record: wall-clock stamp, level, run id, payload."""

    def format(self, record: logging.LogRecord) -> str:
        payload: dict[str, Any] = {
            "ts": datetime.now(timezone.utc).isoformat(timespec="milliseconds"),
            "level": record.levelname,
        }
        run_id = getattr(record, "run_id", None)
        if run_id:
            payload["run_id"] = run_id
        event = getattr(record, "event", None)
        if isinstance(event, dict):
            payload.update(event)
        else:
            payload["msg"] = record.getMessage()
        return json.dumps(payload, default=str, ensure_ascii=False)


def _rotating(path: Path, cfg: dict[str, Any]) -> logging.Handler:
    return logging.handlers.RotatingFileHandler(
        path,
        maxBytes=int(cfg["max_file_size_mb"]) * 1024 * 1024,
        backupCount=int(cfg["backup_count"]),
        encoding="utf-8",
    )


def setup_logging(console_level: Optional[str] = None) -> dict[str, Any]:
    """
    Configure the root logger and the structured channels once per process.
    Later calls return the active config unchanged. With ``enabled: false``
    only the console handler is installed.
    """
    global _initialised
    with _init_lock:
        if _initialised:
            return load_config()

        cfg = load_config(force=True)
        if console_level:
            cfg["console_level"] = console_level

        human = logging.Formatter("%(asctime)s [%(levelname)s] %(name)s: %(message)s",
                                  datefmt="%Y-%m-%d %H:%M:%S")
        root = logging.getLogger()
        for handler in list(root.handlers):
            root.removeHandler(handler)
        root.setLevel(logging.DEBUG)

        console = logging.StreamHandler()
        console.setLevel(_level(cfg["console_level"], logging.INFO))
        console.setFormatter(human)
        root.addHandler(console)

        for name in CHANNELS:
            channel = logging.getLogger(name)
            channel.setLevel(logging.DEBUG)
            channel.propagate = False
            for handler in list(channel.handlers):
                channel.removeHandler(handler)

        if cfg["enabled"]:
            log_dir = Path(cfg["log_dir"])
            log_dir.mkdir(parents=True, exist_ok=True)
            app = _rotating(log_dir / "app.log", cfg)
            app.setLevel(_level(cfg["file_level"], logging.DEBUG))
            app.setFormatter(human)
            root.addHandler(app)
            for name, filename in CHANNELS.items():
                handler = _rotating(log_dir / filename, cfg)
                handler.setFormatter(_JsonLineFormatter())
                logging.getLogger(name).addHandler(handler)

        from . import __version__

        log_event("system", "session_start", pid=os.getpid(), version=__version__)
        logging.getLogger(__name__).debug(f"Logging ready (dir={cfg['log_dir']}, enabled={cfg['enabled']})")
        _initialised = True
        return cfg


@contextlib.contextmanager
def run_context(run_id: str) -> Iterator[None]:
    """Tag every structured line emitted inside the block with ``run_id``."""
    token = _current_run.set(run_id)
    try:
        yield
    finally:
        _current_run.reset(token)


def _emit(logger: logging.Logger, level: int, action: str, payload: dict[str, Any]) -> None:
    logger.log(level, action, extra={"event": payload, "run_id": _current_run.get()})


def log_event(category: str, action: str, /, **details: Any) -> None:
    """Run, sweep or CLI event on the ``sunset.events`` channel."""
    _emit(event_logger, logging.INFO, action, {**details, "category": category, "action": action})


def log_sim_event(action: str, /, **details: Any) -> None:
    _emit(sim_logger, logging.DEBUG, action, {**details, "category": "sim", "action": action})
