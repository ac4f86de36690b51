# evaluation/plots.py
"""Entropy-over-time plots rendered from event logs (SVG via matplotlib)."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Mapping, Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.lines import Line2D  # noqa: E402

from ..sim.eventlog import EventLog  # noqa: E402

logger = logging.getLogger(__name__)

# ── colour palette ────────────────────────────────────────────────────────────
TRACE_COLORS = [
    "#2196F3", "#E91E63", "#4CAF50", "#FF9800", "#9C27B0",
    "#00BCD4", "#F44336", "#8BC34A", "#FF5722", "#3F51B5",
]
THRESHOLD_COLOR = "#FF1744"
INJECTION_COLOR = "#AAAAAA"
ADAPTATION_COLOR = "#00C853"
FACE_COLOR = "#1A1A2E"
AXES_COLOR = "#16213E"


def entropy_trace(log: EventLog) -> tuple[list[float], list[float]]:
    """(times in s, mean entropy) of every published segmentation frame."""
    ts, hs = [], []
    for rec in log.of_kind("publish"):
        if rec.topic == "/segmentation/output" and "entropy" in rec.detail:
            ts.append(rec.seconds)
            hs.append(rec.detail["entropy"])
    return ts, hs


def _style(fig, ax, title: str) -> None:
    fig.patch.set_facecolor(FACE_COLOR)
    ax.set_facecolor(AXES_COLOR)
    for spine in ax.spines.values():
        spine.set_edgecolor("#444466")
    ax.tick_params(colors="#888899", labelsize=8)
    ax.set_xlabel("virtual time (s)", color="#888899", fontsize=9)
    ax.set_ylabel("mean entropy (nats)", color="#888899", fontsize=9)
    ax.set_title(title, color="white", fontsize=12, pad=10)
    ax.grid(True, color="#2A2A4A", linewidth=0.5, alpha=0.7)


def _legend(ax, handles) -> None:
    ax.legend(handles=handles, loc="upper right", fontsize=7, framealpha=0.7,
              facecolor=FACE_COLOR, edgecolor="#555577", labelcolor="white")


def plot_run_entropy(log: EventLog, output: Path, title: str = "",
                     threshold: Optional[float] = 0.06) -> Path:
    """One run: entropy trace plus injection and adaptation markers."""
    fig, ax = plt.subplots(figsize=(10, 4))
    _style(fig, ax, title or Path(output).stem)

    ts, hs = entropy_trace(log)
    ax.plot(ts, hs, color=TRACE_COLORS[0], lw=1.2, zorder=3)
    handles = [Line2D([0], [0], color=TRACE_COLORS[0], lw=1.2, label="entropy")]

    if threshold is not None:
        ax.axhline(threshold, color=THRESHOLD_COLOR, lw=0.8, linestyle="dashed", zorder=2)
        handles.append(Line2D([0], [0], color=THRESHOLD_COLOR, lw=0.8, linestyle="dashed",
                              label=f"threshold {threshold:g}"))

    injections = [r for r in log.of_kind("injection") if r.detail.get("accepted")]
    for rec in injections:
        ax.axvline(rec.seconds, color=INJECTION_COLOR, lw=0.8, alpha=0.6, zorder=1)
        ax.text(rec.seconds, ax.get_ylim()[1] * 0.95, rec.detail["uncertainty"],
                color=INJECTION_COLOR, fontsize=7, rotation=90, va="top")
    if injections:
        handles.append(Line2D([0], [0], color=INJECTION_COLOR, lw=0.8, label="injection"))

    adaptations = [r for r in log.of_kind("adaptation")
                   if r.detail.get("accepted") and r.detail.get("issuer") != "injector"]
    if adaptations:
        ax.scatter([r.seconds for r in adaptations], [0.0] * len(adaptations),
                   c=ADAPTATION_COLOR, s=25, marker="^", zorder=6)
        handles.append(Line2D([0], [0], marker="^", color=ADAPTATION_COLOR, lw=0,
                              markersize=6, label=f"adaptations ({len(adaptations)})"))

    _legend(ax, handles)
    return _save(fig, output)


def plot_entropy_overview(logs: Mapping[str, EventLog], output: Path,
                          threshold: Optional[float] = 0.06) -> Path:
    """One trace per labelled run (e.g. one per entropy uncertainty)."""
    fig, ax = plt.subplots(figsize=(10, 5))
    _style(fig, ax, "Effect of uncertainties on segmentation entropy")
    handles = []
    for i, (label, log) in enumerate(logs.items()):
        color = TRACE_COLORS[i % len(TRACE_COLORS)]
        ts, hs = entropy_trace(log)
        ax.plot(ts, hs, color=color, lw=1.1, alpha=0.9, zorder=3)
        handles.append(Line2D([0], [0], color=color, lw=1.1, label=label))
    if threshold is not None:
        ax.axhline(threshold, color=THRESHOLD_COLOR, lw=0.8, linestyle="dashed", zorder=2)
        handles.append(Line2D([0], [0], color=THRESHOLD_COLOR, lw=0.8, linestyle="dashed",
                              label=f"threshold {threshold:g}"))
    _legend(ax, handles)
    return _save(fig, output)


def _save(fig, output: Path) -> Path:
    output = Path(output)
    output.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(output, format="svg", bbox_inches="tight", facecolor=fig.get_facecolor(),
                metadata={"Date": None})
    plt.close(fig)
    logger.info(f"Saved plot to {output}")
    return output


def save_frame_png(path: Path, image, cmap: Optional[str] = None, vmax: Optional[float] = None) -> Path:
    """Write one array as PNG (RGB as-is, single channel with ``cmap``)."""
    plt.imsave(path, image, cmap=cmap, vmin=0.0, vmax=vmax)
    return Path(path)
