# sunset_sim/runner.py
"""
Assembles a simulation from a scenario, runs it, and writes artifacts.

A sweep runs every ERROR x WARNING x OK combination of uncertainties for each
selected controller, plus two reference groups without a controller, then
aggregates the per-run reports into one summary table.
"""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

from .adaptation.injector import CATALOG, Criticality, Injector
from .adaptation.managing import CONTROLLERS, ManagingAdapter, ManagingSystem, load_plugin
from .adaptation.monitor import MONITOR, MonitorNode
from .artifacts import ArtifactStore
from .config import ScenarioConfig, scenario_from_dict
from .errors import LifecycleError, ScenarioError
from .evaluation.metrics import MetricsReport, RunRecord, aggregate_sweep, compute_metrics, write_runs_csv
from .evaluation.plots import plot_run_entropy
from .logging_setup import log_event, run_context
from .pipeline.nodes import build_pipeline
from .sim.bus import ADAPTATION_DELIVERY, Bus
from .sim.clock import to_ms
from .sim.eventlog import EventLog
from .sim.lifecycle import AdaptationCommand, Environment, NodeRegistry, action_from_dict

logger = logging.getLogger(__name__)

SCRIPT_ISSUER = "script"
SWEEP_INJECTION_TIME_S = 5.0
REFERENCE_CLEAN = "none-clean"
REFERENCE_UNCERTAIN = "none-uncertain"


class Simulation:
    """One fully wired managed system plus its controller, ready to run."""

    def __init__(self, scenario: ScenarioConfig, controller: Optional[ManagingSystem] = None):
        self.scenario = scenario
        settings = scenario.settings
        self.log = EventLog()
        self.bus = Bus(self.log, dict(settings.latency_s))
        self.env = Environment()
        self.registry = NodeRegistry(self.bus, self.env, settings, seed=scenario.seed)

        build_pipeline(self.registry)
        self.registry.register(MONITOR, MonitorNode)

        self.controller = controller or CONTROLLERS.create(scenario.controller, settings)
        self.adapter = ManagingAdapter(self.controller, self.registry, self.bus)

        self.injector = Injector(self.registry, settings.magnitudes)
        self.injector.schedule(scenario.injections)
        self._schedule_scripted()

    def _schedule_scripted(self) -> None:
        for item in self.scenario.scripted_adaptations:
            due = to_ms(item.time_s)
            try:
                cmd = AdaptationCommand(item.target, action_from_dict(item.action, dict(item.args)),
                                        issued_at=due, issuer=SCRIPT_ISSUER)
            except (TypeError, LifecycleError) as e:
                raise ScenarioError("invalid scripted adaptation", [f"{item.action} at {item.time_s}s: {e}"]) from e
            self.bus.schedule(due, ADAPTATION_DELIVERY, SCRIPT_ISSUER,
                              lambda cmd=cmd: self.registry.apply_adaptation(cmd))

    @property
    def monitor(self) -> MonitorNode:
        return self.registry.get(MONITOR)

    def run(self) -> EventLog:
        end = to_ms(self.scenario.duration_s)
        count = self.bus.run_until(end)
        self.log.append(end, EventLog.RUN_END, "simulation", events=count)
        logger.debug(f"Run {self.scenario.name!r} finished: {count} events, {len(self.log)} log records")
        return self.log


def run_scenario(scenario: ScenarioConfig, store: ArtifactStore, run_id: Optional[str] = None,
                 parent: str = "", plot: bool = False) -> tuple[MetricsReport, Path]:
    """Run one scenario and write events.jsonl + report.json (+ entropy.svg)."""
    run_id = run_id or scenario.name
    run_dir = store.run_dir(run_id, parent)
    log_event("run", "start", run_id=run_id, controller=scenario.controller, seed=scenario.seed)

    with run_context(run_id):
        log = Simulation(scenario).run()
    log.write(run_dir / ArtifactStore.EVENT_LOG)
    report = compute_metrics(log, scenario, run_id)
    store.write_json(run_dir / ArtifactStore.REPORT, report.to_dict())
    if plot:
        plot_run_entropy(log, run_dir / "entropy.svg", title=run_id,
                         threshold=scenario.settings.thresholds.entropy_max)

    log_event("run", "complete", run_id=run_id, ratio=report.ratio, t_down=report.downtime,
              iou=report.iou_mean)
    return report, run_dir


# ── Sweep ─────────────────────────────────────────────────────────────────────
@dataclass(frozen=True)
class SweepJob:
    run_id: str
    label: str
    scenario: dict[str, Any] = field(repr=False)
    injections: tuple[str, ...] = ()


def sweep_combinations() -> list[tuple[str, str, str]]:
    """Every (ERROR, WARNING, OK) uncertainty triple."""
    levels = [[u.id for u in CATALOG.by_criticality(c)]
              for c in (Criticality.ERROR, Criticality.WARNING, Criticality.OK)]
    return list(itertools.product(*levels))


def build_sweep_jobs(base: ScenarioConfig, repetitions: int,
                     controllers: Sequence[str] = ("baseline",)) -> list[SweepJob]:
    if repetitions < 1:
        raise ScenarioError("invalid sweep", ["repetitions must be >= 1"])
    raw = dict(base.raw)
    jobs: list[SweepJob] = []

    def job(label: str, controller: str, ids: Sequence[str], at: float, rep: int) -> SweepJob:
        seed = base.seed + rep
        suffix = "-".join(ids) if ids else "clean"
        data = dict(raw, controller=controller, seed=seed, name=f"{label}_{suffix}_r{rep}",
                    injections=[{"time_s": at, "uncertainty": uid} for uid in ids],
                    scripted_adaptations=[])
        return SweepJob(run_id=data["name"], label=label, scenario=data, injections=tuple(ids))

    ok_ids = [u.id for u in CATALOG.by_criticality(Criticality.OK)]
    for rep in range(repetitions):
        jobs.append(job(REFERENCE_CLEAN, "none", (), 0.0, rep))
        for warning in CATALOG.by_criticality(Criticality.WARNING):
            jobs.append(job(REFERENCE_UNCERTAIN, "none", (warning.id, *ok_ids), 0.0, rep))
    for controller in controllers:
        for combo in sweep_combinations():
            for rep in range(repetitions):
                jobs.append(job(controller, controller, combo, SWEEP_INJECTION_TIME_S, rep))
    return jobs


def _run_job(job: SweepJob, out_dir: str, overwrite: bool, plugins: Sequence[str] = ()) -> RunRecord:
    for spec in plugins:
        load_plugin(spec)
    record = RunRecord(run_id=job.run_id, label=job.label, seed=int(job.scenario.get("seed", 0)),
                       log_path=None, injections=job.injections)
    try:
        scenario = scenario_from_dict(job.scenario)
        store = ArtifactStore(out_dir, overwrite=overwrite)
        report, run_dir = run_scenario(scenario, store, job.run_id, parent="runs")
        record.report = report
        record.log_path = str(run_dir / ArtifactStore.EVENT_LOG)
    except Exception as e:
        logger.error(f"Sweep run {job.run_id} failed: {e}")
        record.status = "failed"
        record.error = str(e)
    return record


def run_sweep(base: ScenarioConfig, repetitions: int, out_dir: str | Path,
              controllers: Sequence[str] = ("baseline",), workers: int = 1,
              overwrite: bool = False, plugins: Sequence[str] = ()) -> tuple[list[RunRecord], list[dict[str, str]]]:
    """Run all sweep jobs (optionally in worker processes) and aggregate them."""
    for name in controllers:
        if name not in CONTROLLERS:
            raise ScenarioError("invalid sweep", [f"unknown controller {name!r}"])
    store = ArtifactStore(out_dir, overwrite=overwrite)
    summary_path = store.file("summary.csv")
    runs_path = store.file("runs.csv")
    jobs = build_sweep_jobs(base, repetitions, controllers)
    log_event("sweep", "start", jobs=len(jobs), workers=workers, controllers=list(controllers))
    logger.info(f"Sweep: {len(jobs)} runs with {workers} worker(s)")

    out = str(store.out_dir)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_job, j, out, overwrite, tuple(plugins)) for j in jobs]
            records = [f.result() for f in futures]
    else:
        records = [_run_job(j, out, overwrite) for j in jobs]

    failed = sum(1 for r in records if r.status != "ok")
    rows = aggregate_sweep(records, summary_path,
                           label_order=(REFERENCE_CLEAN, REFERENCE_UNCERTAIN, *controllers))
    write_runs_csv(records, runs_path)
    log_event("sweep", "complete", runs=len(records), failed=failed)
    if failed:
        logger.warning(f"{failed} sweep run(s) failed; see {runs_path}")
    return records, rows
