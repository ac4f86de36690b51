# evaluation/metrics.py
"""
Post-hoc metrics over a run's event log.

    ratio           resolved uncertainties per executed adaptation
    t_react         symptom first observed -> first matching adaptation issued
    redeploys_u     redeploys issued while no persistent fault was active on the target
    t_down          time /segmentation/output missed its expected period
    iou             mean and std of per-frame mean IoU
"""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, Iterable, Optional, Sequence

import numpy as np

from ..errors import MetricsError
from ..sim.clock import to_ms
from ..sim.eventlog import EventLog, LogRecord

if TYPE_CHECKING:
    from ..config import ScenarioConfig, Thresholds

logger = logging.getLogger(__name__)

SEGMENTATION_TOPIC = "/segmentation/output"
SUMMARY_HEADER = [
    "controller", "ratio", "ratio_std", "t_react", "t_react_std", "redeploys_u", "redeploys_u_std",
    "t_down", "t_down_std", "iou", "iou_std",
]
NA = "N/A"


@dataclass(frozen=True)
class IouResult:
    per_class: dict[int, float]
    mean: float


def compute_iou(pred: np.ndarray, gt: np.ndarray, num_classes: int) -> IouResult:
    """Per-class IoU; classes absent from both masks are left out of the mean."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise MetricsError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    per_class: dict[int, float] = {}
    for c in range(num_classes):
        p = pred == c
        g = gt == c
        union = np.count_nonzero(p | g)
        if union == 0:
            continue
        per_class[c] = np.count_nonzero(p & g) / union
    mean = float(np.mean(list(per_class.values()))) if per_class else 1.0
    return IouResult(per_class=per_class, mean=mean)


def _require_complete(log: EventLog) -> None:
    if not log.complete:
        raise MetricsError("event log is incomplete (no run_end record)")


def segmentation_arrivals(log: EventLog, topic: str = SEGMENTATION_TOPIC) -> list[int]:
    return [r.t for r in log.of_kind("publish") if r.topic == topic]


def compute_downtime(log: EventLog, expected_period_s: float, topic: str = SEGMENTATION_TOPIC) -> float:
    """Sum of max(0, gap - period) over inter-arrival gaps, run start and end included."""
    _require_complete(log)
    period = to_ms(expected_period_s)
    points = [0] + segmentation_arrivals(log, topic) + [log.end_time]
    down = sum(max(0, b - a - period) for a, b in zip(points, points[1:]))
    return down / 1000.0


# ── Adaptation bookkeeping ────────────────────────────────────────────────────
def _catalog():
    from ..adaptation.injector import CATALOG
    return CATALOG


def _accepted_injections(log: EventLog) -> list[LogRecord]:
    return [r for r in log.of_kind("injection") if r.detail.get("accepted")]


def _executed(log: EventLog) -> list[LogRecord]:
    from ..adaptation.injector import executed_commands
    return executed_commands(log)


def _issued_at(rec: LogRecord) -> int:
    value = rec.detail.get("issued_at")
    return to_ms(float(value)) if value is not None else rec.t


def compute_reaction_time(log: EventLog) -> dict[str, Optional[float]]:
    """
    Per injected uncertainty: issue time of the first executed command that
    matches one of its resolving templates, minus the time its symptom was
    first observed. None where either never happened.
    """
    catalog = _catalog()
    diagnostics = log.of_kind("diagnostics")
    commands = _executed(log)
    out: dict[str, Optional[float]] = {}
    for inj in _accepted_injections(log):
        u = catalog[inj.detail["uncertainty"]]
        observed: Optional[int] = None
        for rec in diagnostics:
            if rec.t < inj.t:
                continue
            for obs in rec.detail.get("symptoms", []):
                first = to_ms(float(obs["first_observed"]))
                if obs["symptom"] == u.symptom.value and first >= inj.t:
                    observed = first
                    break
            if observed is not None:
                break
        if observed is None:
            out[u.id] = None
            continue
        match = next(
            (c for c in commands
             if _issued_at(c) >= observed
             and any(t.matches(c.node, c.detail["action"], c.detail.get("args", {})) for t in u.templates())),
            None,
        )
        out[u.id] = None if match is None else (_issued_at(match) - observed) / 1000.0
    return out


def _redeploy_needed(log: EventLog, node: str, t: int) -> bool:
    """An uncleared fault on ``node`` that no lighter adaptation could have fixed."""
    catalog = _catalog()
    for inj in _accepted_injections(log):
        u = catalog[inj.detail["uncertainty"]]
        if not u.requires_redeploy or u.target != node or inj.t > t:
            continue
        if not any(inj.t < r.t <= t and r.node == node for r in log.of_kind("redeploy_complete")):
            return True
    return False


def compute_ratio_and_redeploys(log: EventLog, thresholds: "Thresholds") -> tuple[Optional[float], int, dict[str, Optional[int]]]:
    """(ratio or None when nothing was executed, #unnecessary redeploys, resolved_at per uncertainty)."""
    from ..adaptation.injector import resolved_check

    _require_complete(log)
    resolved = {
        inj.detail["uncertainty"]: resolved_check(inj.detail["uncertainty"], log, thresholds, inj.t)
        for inj in _accepted_injections(log)
    }
    executed = _executed(log)
    n_resolved = sum(1 for v in resolved.values() if v is not None)
    ratio = n_resolved / len(executed) if executed else None
    unnecessary = sum(
        1 for c in executed
        if c.detail.get("action") == "Redeploy" and not _redeploy_needed(log, c.node, c.t)
    )
    return ratio, unnecessary, resolved


# ── Reports ───────────────────────────────────────────────────────────────────
@dataclass
class MetricsReport:
    run_id: str
    controller: str
    seed: int
    duration_s: float
    ratio: Optional[float]
    t_react: Optional[float]
    t_react_std: Optional[float]
    redeploys_unnecessary: int
    downtime: float
    availability: float
    iou_mean: Optional[float]
    iou_std: Optional[float]
    mean_entropy: Optional[float]
    executed: int
    redeploys: int
    uncertainties: dict[str, dict[str, Any]] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "MetricsReport":
        return cls(**data)


def _mean_std(values: Sequence[float]) -> tuple[Optional[float], Optional[float]]:
    if not values:
        return None, None
    arr = np.asarray(values, dtype=float)
    return float(arr.mean()), float(arr.std())


def compute_metrics(log: EventLog, scenario: "ScenarioConfig", run_id: Optional[str] = None) -> MetricsReport:
    _require_complete(log)
    settings = scenario.settings
    ratio, unnecessary, resolved = compute_ratio_and_redeploys(log, settings.thresholds)
    reactions = compute_reaction_time(log)
    resolved_reactions = [v for uid, v in reactions.items() if v is not None and resolved.get(uid) is not None]
    t_react, t_react_std = _mean_std(resolved_reactions)

    downtime = compute_downtime(log, settings.frame_period_s)
    duration = log.end_time / 1000.0 or scenario.duration_s
    seg = [r for r in log.of_kind("publish") if r.topic == SEGMENTATION_TOPIC]
    iou_mean, iou_std = _mean_std([r.detail["iou"] for r in seg if "iou" in r.detail])
    entropy_mean, _ = _mean_std([r.detail["entropy"] for r in seg if "entropy" in r.detail])
    executed = _executed(log)

    uncertainties = {}
    for uid, at in resolved.items():
        uncertainties[uid] = {
            "resolved_at": None if at is None else at / 1000.0,
            "t_react": reactions.get(uid),
        }

    return MetricsReport(
        run_id=run_id or scenario.name,
        controller=scenario.controller,
        seed=scenario.seed,
        duration_s=duration,
        ratio=ratio,
        t_react=t_react,
        t_react_std=t_react_std,
        redeploys_unnecessary=unnecessary,
        downtime=downtime,
        availability=1.0 - downtime / duration,
        iou_mean=iou_mean,
        iou_std=iou_std,
        mean_entropy=entropy_mean,
        executed=len(executed),
        redeploys=sum(1 for c in executed if c.detail.get("action") == "Redeploy"),
        uncertainties=uncertainties,
    )


# ── Sweep aggregation ─────────────────────────────────────────────────────────
@dataclass
class RunRecord:
    run_id: str
    label: str
    seed: int
    log_path: Optional[str]
    injections: tuple[str, ...] = ()
    status: str = "ok"
    error: str = ""
    report: Optional[MetricsReport] = None


def _fmt(value: Optional[float]) -> str:
    return NA if value is None else f"{value:.4f}"


def aggregate_sweep(runs: Iterable[RunRecord], out_path: Optional[Path] = None,
                    label_order: Sequence[str] = ()) -> list[dict[str, str]]:
    """
    One row per label: mean and population std of each metric over the
    label's successful runs. Controller metrics with no defined value are N/A.
    """
    groups: dict[str, list[MetricsReport]] = {}
    for run in runs:
        groups.setdefault(run.label, [])
        if run.status == "ok" and run.report is not None:
            groups[run.label].append(run.report)

    ordered = [l for l in label_order if l in groups] + sorted(l for l in groups if l not in label_order)
    rows = []
    for label in ordered:
        reports = groups[label]
        row = {"controller": label}
        for col, attr in (("ratio", "ratio"), ("t_react", "t_react"), ("redeploys_u", "redeploys_unnecessary"),
                          ("t_down", "downtime"), ("iou", "iou_mean")):
            values = [getattr(r, attr) for r in reports if getattr(r, attr) is not None]
            if attr == "redeploys_unnecessary" and not any(r.executed for r in reports):
                values = []
            mean, std = _mean_std(values)
            row[col] = _fmt(mean)
            row[f"{col}_std"] = _fmt(std)
        rows.append(row)

    if out_path is not None:
        out_path = Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        with out_path.open("w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=SUMMARY_HEADER)
            writer.writeheader()
            writer.writerows(rows)
        logger.info(f"Wrote sweep summary ({len(rows)} rows) to {out_path}")
    return rows


RUNS_HEADER = [
    "run_id", "label", "seed", "injections", "status", "ratio", "t_react", "redeploys_u",
    "t_down", "availability", "iou", "iou_std", "executed", "error",
]


def write_runs_csv(runs: Iterable[RunRecord], out_path: Path) -> Path:
    out_path = Path(out_path)
    with out_path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(RUNS_HEADER)
        for run in runs:
            r = run.report
            writer.writerow([
                run.run_id, run.label, run.seed, "+".join(run.injections), run.status,
                _fmt(r.ratio) if r else NA, _fmt(r.t_react) if r else NA,
                r.redeploys_unnecessary if r else NA, _fmt(r.downtime) if r else NA,
                _fmt(r.availability) if r else NA, _fmt(r.iou_mean) if r else NA,
                _fmt(r.iou_std) if r else NA, r.executed if r else NA, run.error,
            ])
    return out_path


def read_summary(path: Path) -> list[dict[str, str]]:
    with Path(path).open("r", newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    if rows and list(rows[0].keys()) != SUMMARY_HEADER:
        raise MetricsError(f"{path} is not a sweep summary")
    return rows
