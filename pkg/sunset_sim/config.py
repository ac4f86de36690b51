# sunset_sim/config.py
"""
Scenario configuration.

Scenario files are JSON objects carrying a ``schema_version``. They are
deep-merged onto ``DEFAULT_SCENARIO`` and turned into frozen dataclasses.
Every problem found during validation is collected, so a single
``ScenarioError`` reports all of them at once.
"""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .errors import ScenarioError
from .logging_setup import deep_merge

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

DEFAULT_SCENARIO: dict[str, Any] = {
    "schema_version": SCHEMA_VERSION,
    "name": "scenario",
    "seed": 0,
    "duration_s": 20.0,
    "controller": "none",
    "frame_rate_hz": 10.0,
    "injections": [],
    "scripted_adaptations": [],
    "thresholds": {
        "freq_min_hz": 1.0,
        "entropy_max": 0.06,
        "sharpness_min": 1.0e-4,
    },
    "delays": {
        "restart_s": 0.5,
        "redeploy_s": {"camera": 3.0, "depth": 3.0},
        "default_redeploy_s": 1.0,
    },
    "latency_s": {},
    "monitor": {"period_s": 0.5, "window_s": 2.0},
    "fusion": {"pairing_tolerance_s": 0.05, "queue_depth": 10, "search_radius": 4},
    "scene": {
        "width": 64,
        "height": 64,
        "num_classes": 5,
        "pixel_noise_sigma": 0.01,
        "bands_per_half": 5,
        "drift_px_per_s": 2.0,
    },
    "model": {"tau": {"fused": 0.003, "rgb": 0.0015, "depth": 0.0015}},
    "magnitudes": {
        "color_shift": 0.25,
        "depth_noise_sigma": 0.15,
        "misalignment_px": [2, 0],
        "blur_sigma": 2.0,
    },
    "debug_logits": False,
}

NODE_IDS = ("camera", "depth", "enhancement", "fusion", "segmentation", "monitor")
ACTION_NAMES = ("SetParameter", "ChangeSubscription", "Activate", "Deactivate", "Restart", "Redeploy")


# ── Dataclasses ───────────────────────────────────────────────────────────────
@dataclass(frozen=True)
class Thresholds:
    freq_min_hz: float = 1.0
    entropy_max: float = 0.06
    sharpness_min: float = 1.0e-4


@dataclass(frozen=True)
class Delays:
    restart_s: float = 0.5
    redeploy_s: Mapping[str, float] = field(default_factory=dict)
    default_redeploy_s: float = 1.0

    def redeploy_for(self, node_id: str) -> float:
        return float(self.redeploy_s.get(node_id, self.default_redeploy_s))


@dataclass(frozen=True)
class MonitorSettings:
    period_s: float = 0.5
    window_s: float = 2.0


@dataclass(frozen=True)
class FusionSettings:
    pairing_tolerance_s: float = 0.05
    queue_depth: int = 10
    search_radius: int = 4


@dataclass(frozen=True)
class SceneSettings:
    width: int = 64
    height: int = 64
    num_classes: int = 5
    pixel_noise_sigma: float = 0.01
    bands_per_half: int = 5
    drift_px_per_s: float = 2.0


@dataclass(frozen=True)
class ModelSettings:
    tau: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class Magnitudes:
    color_shift: float = 0.25
    depth_noise_sigma: float = 0.15
    misalignment_px: tuple[int, int] = (2, 0)
    blur_sigma: float = 2.0


@dataclass(frozen=True)
class Injection:
    time_s: float
    uncertainty: str


@dataclass(frozen=True)
class ScriptedAdaptation:
    time_s: float
    target: str
    action: str
    args: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class SimulationSettings:
    """Numeric knobs of the managed system, shared by every node."""
    frame_rate_hz: float = 10.0
    thresholds: Thresholds = Thresholds()
    delays: Delays = Delays()
    latency_s: Mapping[str, float] = field(default_factory=dict)
    monitor: MonitorSettings = MonitorSettings()
    fusion: FusionSettings = FusionSettings()
    scene: SceneSettings = SceneSettings()
    model: ModelSettings = ModelSettings()
    magnitudes: Magnitudes = Magnitudes()
    debug_logits: bool = False

    @property
    def frame_period_s(self) -> float:
        return 1.0 / self.frame_rate_hz


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    seed: int
    duration_s: float
    controller: str
    injections: tuple[Injection, ...]
    scripted_adaptations: tuple[ScriptedAdaptation, ...]
    settings: SimulationSettings
    raw: Mapping[str, Any] = field(default_factory=dict, compare=False, repr=False)


# ── Loading ───────────────────────────────────────────────────────────────────
def load_scenario(path: Path | str, **overrides: Any) -> ScenarioConfig:
    """Read a JSON scenario file and validate it."""
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"scenario file not found: {path}", [f"missing file {path}"])
    try:
        with path.open("r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"invalid JSON in {path}", [f"line {e.lineno}: {e.msg}"]) from e
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a JSON object", ["top level is not an object"])
    data.update(overrides)
    cfg = scenario_from_dict(data)
    logger.debug(f"Loaded scenario {cfg.name!r} from {path}")
    return cfg


def scenario_from_dict(data: Mapping[str, Any]) -> ScenarioConfig:
    diagnostics: list[str] = []

    unknown = sorted(set(data) - set(DEFAULT_SCENARIO))
    for key in unknown:
        diagnostics.append(f"unknown key {key!r}")

    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        diagnostics.append(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")

    merged = copy.deepcopy(DEFAULT_SCENARIO)
    deep_merge(merged, {k: v for k, v in data.items() if k not in unknown})

    try:
        cfg = _build(merged)
    except (TypeError, ValueError, KeyError) as e:
        diagnostics.append(f"malformed value: {e}")
        raise ScenarioError("scenario validation failed", diagnostics) from e

    diagnostics.extend(_validate(cfg))
    if diagnostics:
        raise ScenarioError("scenario validation failed", diagnostics)
    return cfg


def _build(d: dict[str, Any]) -> ScenarioConfig:
    delays = d["delays"]
    mags = d["magnitudes"]
    settings = SimulationSettings(
        frame_rate_hz=float(d["frame_rate_hz"]),
        thresholds=Thresholds(**{k: float(v) for k, v in d["thresholds"].items()}),
        delays=Delays(
            restart_s=float(delays["restart_s"]),
            redeploy_s={str(k): float(v) for k, v in delays["redeploy_s"].items()},
            default_redeploy_s=float(delays["default_redeploy_s"]),
        ),
        latency_s={str(k): float(v) for k, v in d["latency_s"].items()},
        monitor=MonitorSettings(**{k: float(v) for k, v in d["monitor"].items()}),
        fusion=FusionSettings(
            pairing_tolerance_s=float(d["fusion"]["pairing_tolerance_s"]),
            queue_depth=int(d["fusion"]["queue_depth"]),
            search_radius=int(d["fusion"]["search_radius"]),
        ),
        scene=SceneSettings(**d["scene"]),
        model=ModelSettings(tau={str(k): float(v) for k, v in d["model"]["tau"].items()}),
        magnitudes=Magnitudes(
            color_shift=float(mags["color_shift"]),
            depth_noise_sigma=float(mags["depth_noise_sigma"]),
            misalignment_px=(int(mags["misalignment_px"][0]), int(mags["misalignment_px"][1])),
            blur_sigma=float(mags["blur_sigma"]),
        ),
        debug_logits=bool(d["debug_logits"]),
    )
    return ScenarioConfig(
        name=str(d["name"]),
        seed=int(d["seed"]),
        duration_s=float(d["duration_s"]),
        controller=str(d["controller"]),
        injections=tuple(
            Injection(time_s=float(i["time_s"]), uncertainty=str(i["uncertainty"]))
            for i in d["injections"]
        ),
        scripted_adaptations=tuple(
            ScriptedAdaptation(
                time_s=float(a["time_s"]),
                target=str(a["target"]),
                action=str(a["action"]),
                args=dict(a.get("args", {})),
            )
            for a in d["scripted_adaptations"]
        ),
        settings=settings,
        raw=d,
    )


def _validate(cfg: ScenarioConfig) -> list[str]:
    # Deferred: the catalog and controller registry import config themselves.
    from .adaptation.injector import CATALOG
    from .adaptation.managing import CONTROLLERS
    from .pipeline.scene import MAX_COLOR_SHIFT

    out: list[str] = []
    s = cfg.settings

    if cfg.duration_s <= 0:
        out.append("duration_s must be > 0")
    if s.frame_rate_hz <= 0:
        out.append("frame_rate_hz must be > 0")
    if s.monitor.period_s <= 0 or s.monitor.window_s <= 0:
        out.append("monitor period_s and window_s must be > 0")
    if s.scene.num_classes < 2:
        out.append("scene.num_classes must be >= 2")
    if not 0 < s.magnitudes.color_shift <= MAX_COLOR_SHIFT:
        out.append(f"magnitudes.color_shift must be in (0, {MAX_COLOR_SHIFT}]")
    if any(s.model.tau.get(m, 0.0) <= 0 for m in ("fused", "rgb", "depth")):
        out.append("model.tau needs positive entries for fused, rgb and depth")
    if any(v < 0 for v in s.latency_s.values()):
        out.append("latency_s values must be >= 0")

    for node in NODE_IDS:
        if s.delays.redeploy_for(node) <= s.delays.restart_s:
            out.append(f"redeploy delay for {node} must exceed restart_s")

    if cfg.controller not in CONTROLLERS:
        out.append(f"unknown controller {cfg.controller!r} (known: {', '.join(CONTROLLERS.names())})")

    seen_levels: dict[str, str] = {}
    for inj in cfg.injections:
        entry = CATALOG.get(inj.uncertainty)
        if entry is None:
            out.append(f"unknown uncertainty {inj.uncertainty!r}")
            continue
        if not 0 <= inj.time_s <= cfg.duration_s:
            out.append(f"injection {inj.uncertainty} at {inj.time_s}s outside run")
        level = entry.criticality.value
        if level in seen_levels:
            out.append(
                f"{inj.uncertainty} and {seen_levels[level]} share criticality {level}; "
                "one active uncertainty per level"
            )
        else:
            seen_levels[level] = inj.uncertainty

    for a in cfg.scripted_adaptations:
        if a.action not in ACTION_NAMES:
            out.append(f"unknown action {a.action!r}")
        if a.target not in NODE_IDS:
            out.append(f"unknown target {a.target!r}")
        if not 0 <= a.time_s <= cfg.duration_s:
            out.append(f"scripted {a.action} at {a.time_s}s outside run")
    return out
