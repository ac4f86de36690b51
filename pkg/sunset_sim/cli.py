# sunset_sim/cli.py
"""
SUNSET simulator command line.

Usage: python sunset.py <command> [options]

Commands:
  run          Run one scenario and write its event log and report
  sweep        Run every uncertainty combination for one or more controllers
  metrics      Recompute the metrics report from an event log
  report       Print a sweep summary; --plot renders entropy plots
  calibrate    Search model temperatures and the sharpness threshold
  validate     Check a scenario file
  dump-frames  Write generated scene frames as PNG for inspection

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from .adaptation.managing import load_plugin
from .artifacts import ArtifactStore
from .config import ScenarioConfig, load_scenario, scenario_from_dict
from .errors import ScenarioError, SunsetError
from .logging_setup import log_event, setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _scenario(args: argparse.Namespace) -> ScenarioConfig:
    overrides = {}
    if getattr(args, "controller", None):
        overrides["controller"] = args.controller
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "scenario", None):
        return load_scenario(args.scenario, **overrides)
    return scenario_from_dict(overrides)


# ── Subcommands ───────────────────────────────────────────────────────────────
def cmd_run(args: argparse.Namespace) -> int:
    from .runner import run_scenario

    scenario = _scenario(args)
    store = ArtifactStore(args.out, overwrite=args.force)
    report, run_dir = run_scenario(scenario, store, plot=args.plot)
    print(f"Run {scenario.name!r} -> {run_dir}")
    print(f"  t_down={report.downtime:.3f}s  availability={report.availability:.1%}  "
          f"iou={_num(report.iou_mean)}  ratio={_num(report.ratio)}  redeploy_u={report.redeploys_unnecessary}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    from .runner import run_sweep

    base = _scenario(args)
    controllers = [c.strip() for c in args.controllers.split(",") if c.strip()]
    records, rows = run_sweep(base, args.reps, args.out, controllers=controllers, workers=args.workers,
                              overwrite=args.force, plugins=args.plugin or ())
    _print_table(rows)
    failed = [r for r in records if r.status != "ok"]
    print(f"{len(records)} runs, {len(failed)} failed -> {Path(args.out) / 'summary.csv'}")
    empty = [c for c in controllers if not any(r.label == c and r.status == "ok" for r in records)]
    if empty:
        print(f"No successful run for controller(s): {', '.join(empty)}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_metrics(args: argparse.Namespace) -> int:
    from .evaluation.metrics import compute_metrics
    from .sim.eventlog import EventLog

    scenario = load_scenario(args.scenario)
    log_path = Path(args.log)
    if not log_path.exists():
        raise ScenarioError(f"log not found: {log_path}", [f"missing file {log_path}"])
    report = compute_metrics(EventLog.read(log_path), scenario, run_id=log_path.parent.name)
    text = json.dumps(report.to_dict(), indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    from .evaluation.metrics import read_summary

    csv_path = Path(args.csv)
    if not csv_path.exists():
        raise ScenarioError(f"summary not found: {csv_path}", [f"missing file {csv_path}"])
    _print_table(read_summary(csv_path))
    if args.plot:
        for path in _plot_sweep(csv_path.parent):
            print(f"  plot: {path}")
    return EXIT_OK


def _plot_sweep(sweep_dir: Path) -> list[Path]:
    from .evaluation.plots import plot_entropy_overview, plot_run_entropy
    from .sim.eventlog import EventLog

    runs_csv = sweep_dir / "runs.csv"
    if not runs_csv.exists():
        return []
    with runs_csv.open("r", newline="", encoding="utf-8") as f:
        rows = [r for r in csv.DictReader(f) if r["status"] == "ok"]

    written = []
    overview: dict[str, EventLog] = {}
    for row in rows:
        log_path = sweep_dir / "runs" / row["run_id"] / ArtifactStore.EVENT_LOG
        if not log_path.exists():
            continue
        log = EventLog.read(log_path)
        written.append(plot_run_entropy(log, sweep_dir / f"entropy_{row['run_id']}.svg", title=row["run_id"]))
        if row["label"] == "none-uncertain":
            warning = row["injections"].split("+")[0]
            overview.setdefault(warning, log)
        elif row["label"] == "none-clean":
            overview.setdefault("clean", log)
    if overview:
        written.append(plot_entropy_overview(dict(sorted(overview.items())), sweep_dir / "entropy_overview.svg"))
    return written


def cmd_calibrate(args: argparse.Namespace) -> int:
    from .calibration import calibrate, format_table

    scenario = _scenario(args)
    result = calibrate(scenario.settings, seed=scenario.seed)
    print(format_table(result.table))
    print(f"sharpness clean={result.sharpness_clean:.3g} blurred={result.sharpness_blurred:.3g} "
          f"-> threshold {result.sharpness_min:.3g}")
    out = Path(args.out)
    if out.exists() and not args.force:
        raise SunsetError(f"{out} exists (use --force to overwrite)")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(result.fragment(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"Calibration written to {out}")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    print(f"{args.scenario}: OK ({scenario.name}, controller={scenario.controller}, "
          f"{len(scenario.injections)} injection(s), {scenario.duration_s:g}s)")
    return EXIT_OK


def cmd_dump_frames(args: argparse.Namespace) -> int:
    from .evaluation.plots import save_frame_png
    from .pipeline.scene import SceneSpec, generate_frame
    from .sim.clock import format_time, to_ms

    scenario = _scenario(args)
    spec = SceneSpec.from_settings(scenario.settings.scene, scenario.seed)
    store = ArtifactStore(args.out, overwrite=args.force)
    index_path = store.file("index.json")
    period = to_ms(scenario.settings.frame_period_s)
    entries = []
    for i in range(args.frames):
        stamp = (i + 1) * period
        bundle = generate_frame(stamp, spec)
        stem = f"frame_{i:04d}"
        save_frame_png(store.out_dir / f"{stem}_rgb.png", bundle.rgb)
        save_frame_png(store.out_dir / f"{stem}_depth.png", bundle.depth, cmap="gray", vmax=1.0)
        save_frame_png(store.out_dir / f"{stem}_labels.png", bundle.labels, cmap="tab10",
                       vmax=max(spec.num_classes - 1, 1))
        entries.append({"stamp": format_time(stamp), "rgb": f"{stem}_rgb.png",
                        "depth": f"{stem}_depth.png", "labels": f"{stem}_labels.png"})
    store.write_json(index_path, {"seed": spec.seed, "width": spec.width, "height": spec.height,
                                  "num_classes": spec.num_classes, "frames": entries})
    print(f"Wrote {len(entries)} frame triples to {store.out_dir}")
    return EXIT_OK


# ── Helpers ───────────────────────────────────────────────────────────────────
def _num(value: Optional[float]) -> str:
    return "N/A" if value is None else f"{value:.3f}"


def _print_table(rows: list[dict[str, str]]) -> None:
    if not rows:
        print("(no rows)")
        return
    cols = list(rows[0].keys())
    widths = {c: max(len(c), *(len(str(r[c])) for r in rows)) for c in cols}
    print("  ".join(c.ljust(widths[c]) for c in cols))
    for r in rows:
        print("  ".join(str(r[c]).ljust(widths[c]) for c in cols))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sunset",
        description="SUNSET self-adaptation exemplar simulator",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__,
    )
    parser.add_argument("--log-level", default=None, help="Console log level (DEBUG, INFO, ...)")
    parser.add_argument("--plugin", action="append", metavar="MODULE[:ATTR]",
                        help="Import a module that registers controllers (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="Run one scenario")
    p.add_argument("--scenario", required=True, help="Scenario JSON file")
    p.add_argument("--out", required=True, help="Output directory")
    p.add_argument("--controller", help="Override the scenario's controller")
    p.add_argument("--seed", type=int, help="Override the scenario's seed")
    p.add_argument("--plot", action="store_true", help="Also write entropy.svg")
    p.add_argument("--force", action="store_true", help="Overwrite existing artifacts")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="Run all uncertainty combinations")
    p.add_argument("--reps", type=int, default=3, help="Repetitions per combination")
    p.add_argument("--out", required=True, help="Output directory")
    p.add_argument("--scenario", help="Base scenario (defaults otherwise)")
    p.add_argument("--seed", type=int, help="Base seed")
    p.add_argument("--controllers", default="baseline", help="Comma-separated controller names")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                   help="Worker processes (default: one per CPU; 1 runs in-process)")
    p.add_argument("--force", action="store_true", help="Overwrite existing artifacts")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("metrics", help="Compute metrics from an event log")
    p.add_argument("--log", required=True, help="events.jsonl of a run")
    p.add_argument("--scenario", required=True, help="Scenario the run used")
    p.add_argument("--out", help="Write the report here as well")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("report", help="Print a sweep summary")
    p.add_argument("--csv", required=True, help="summary.csv of a sweep")
    p.add_argument("--plot", action="store_true", help="Write entropy plots next to the CSV")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("calibrate", help="Calibrate temperatures and sharpness threshold")
    p.add_argument("--out", required=True, help="JSON fragment to write")
    p.add_argument("--scenario", help="Base scenario (defaults otherwise)")
    p.add_argument("--seed", type=int, help="Scene seed")
    p.add_argument("--force", action="store_true", help="Overwrite the output file")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("validate", help="Validate a scenario file")
    p.add_argument("--scenario", required=True, help="Scenario JSON file")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("dump-frames", help="Write scene frames as PNG")
    p.add_argument("--out", required=True, help="Output directory")
    p.add_argument("--frames", type=int, default=10, help="Number of frames")
    p.add_argument("--seed", type=int, help="Scene seed")
    p.add_argument("--scenario", help="Scenario providing scene settings")
    p.add_argument("--force", action="store_true", help="Overwrite existing files")
    p.set_defaults(func=cmd_dump_frames)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(console_level=args.log_level)
    log_event("cli", args.command, argv=list(argv) if argv is not None else sys.argv[1:])

    try:
        for spec in args.plugin or ():
            load_plugin(spec)
        return args.func(args)
    except ScenarioError as e:
        print(f"Configuration error: {e}", file=sys.stderr)
        for line in e.diagnostics:
            print(f"  - {line}", file=sys.stderr)
        return EXIT_CONFIG
    except (ImportError, AttributeError) as e:
        if args.plugin:
            print(f"Plugin error: {e}", file=sys.stderr)
            return EXIT_CONFIG
        logger.exception("Unexpected failure")
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except SunsetError as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as e:
        logger.exception("Unexpected failure")
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
