# sunset_sim/calibration.py
"""
Picks model temperatures and the sharpness threshold so the fixed entropy
threshold separates clean frames from every entropy-raising uncertainty.

The fused temperature is searched on a logarithmic grid. Single-modality
temperatures follow from it: one RGB step and one depth step are each half
the fused squared distance between neighbouring classes, so they get half
the temperature.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .config import SimulationSettings
from .errors import CalibrationError
from .pipeline import imaging
from .pipeline.model import ModelConfig, segment_arrays
from .pipeline.scene import SceneSpec, generate_frame, prototype_matrix

logger = logging.getLogger(__name__)

CLEAN_MAX = 0.04
DEGRADED_MIN = 0.09
TAU_GRID = np.geomspace(1e-4, 1e-1, 31)
SAMPLE_STAMPS_MS = (1000, 5000, 12000)


@dataclass
class CalibrationRow:
    tau: float
    clean: float
    degraded: dict[str, float]

    @property
    def ok(self) -> bool:
        return self.clean < CLEAN_MAX and min(self.degraded.values()) > DEGRADED_MIN

    @property
    def margin(self) -> float:
        """Smallest distance, in log space, between either side and 0.06."""
        return min(math.log(0.06 / max(self.clean, 1e-12)), math.log(min(self.degraded.values()) / 0.06))


@dataclass
class CalibrationResult:
    tau: dict[str, float]
    sharpness_min: float
    sharpness_clean: float
    sharpness_blurred: float
    table: list[CalibrationRow] = field(default_factory=list)

    def fragment(self) -> dict:
        """Scenario fragment that can be merged into any scenario file."""
        return {
            "model": {"tau": self.tau},
            "thresholds": {"sharpness_min": self.sharpness_min},
        }


Degradation = Callable[[np.ndarray, np.ndarray, np.random.Generator], tuple[np.ndarray, np.ndarray]]


def degradations(settings: SimulationSettings) -> dict[str, Degradation]:
    """Entropy-raising uncertainties at their configured magnitudes."""
    m = settings.magnitudes
    return {
        "color_shift": lambda rgb, d, rng: (imaging.color_shift(rgb, m.color_shift), d),
        "enhancement_on_clean": lambda rgb, d, rng: (imaging.enhance(rgb, m.color_shift), d),
        "misalignment": lambda rgb, d, rng: (rgb, imaging.shift_image(d, tuple(m.misalignment_px))),
        "depth_noise": lambda rgb, d, rng: (rgb, imaging.add_depth_noise(d, m.depth_noise_sigma, rng)),
    }


def _mean_entropy(settings: SimulationSettings, spec: SceneSpec, tau: float,
                  degrade: Optional[Degradation]) -> float:
    model = ModelConfig(modality="fused", prototypes=prototype_matrix(spec.num_classes, "fused"), tau=tau)
    values = []
    for stamp in SAMPLE_STAMPS_MS:
        bundle = generate_frame(stamp, spec)
        rgb, depth = bundle.rgb, bundle.depth
        if degrade is not None:
            rgb, depth = degrade(rgb, depth, np.random.default_rng([spec.seed, stamp, 1]))
        values.append(segment_arrays(rgb, depth, model).mean_entropy)
    return float(np.mean(values))


def calibrate(settings: SimulationSettings, seed: int = 0) -> CalibrationResult:
    spec = SceneSpec.from_settings(settings.scene, seed)
    degs = degradations(settings)
    table = []
    for tau in TAU_GRID:
        row = CalibrationRow(
            tau=float(tau),
            clean=_mean_entropy(settings, spec, float(tau), None),
            degraded={name: _mean_entropy(settings, spec, float(tau), fn) for name, fn in degs.items()},
        )
        table.append(row)
        logger.debug(f"tau={tau:.5f} clean={row.clean:.4f} degraded_min={min(row.degraded.values()):.4f}")

    passing = [row for row in table if row.ok]
    if not passing:
        raise CalibrationError("no temperature separates clean from degraded entropy:\n" + format_table(table))
    best = max(passing, key=lambda r: r.margin)

    sharp_clean = float(np.mean([imaging.sharpness(generate_frame(t, spec).rgb) for t in SAMPLE_STAMPS_MS]))
    sharp_blur = float(np.mean([
        imaging.sharpness(imaging.blur(generate_frame(t, spec).rgb, settings.magnitudes.blur_sigma))
        for t in SAMPLE_STAMPS_MS
    ]))

    tau = round(best.tau, 6)
    return CalibrationResult(
        tau={"fused": tau, "rgb": round(tau / 2, 6), "depth": round(tau / 2, 6)},
        sharpness_min=float(f"{math.sqrt(sharp_clean * sharp_blur):.3g}"),
        sharpness_clean=sharp_clean,
        sharpness_blurred=sharp_blur,
        table=table,
    )


def format_table(table: list[CalibrationRow]) -> str:
    names = list(table[0].degraded) if table else []
    lines = ["tau        clean    " + "  ".join(f"{n[:12]:>12}" for n in names) + "  ok"]
    for row in table:
        cols = "  ".join(f"{row.degraded[n]:12.4f}" for n in names)
        lines.append(f"{row.tau:<9.5f}  {row.clean:7.4f}  {cols}  {'yes' if row.ok else '-'}")
    return "\n".join(lines)
