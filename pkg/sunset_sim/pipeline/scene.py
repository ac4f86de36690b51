# pipeline/scene.py
"""
Procedural RGB-D scene generator.

Frames show a terrain profile: vertical bands with wavy, slowly drifting
boundaries. Walking away from the centre seam the class changes by one
prototype step per band, and the right half mirrors the left with class
k -> K-1-k. Every adjacent pair of regions is therefore a neighbour pair in
prototype space, mirrored classes cover identical areas, and all classes are
present in every frame.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import TYPE_CHECKING

import numpy as np

from ..errors import ScenarioError
from .imaging import LUMA_WEIGHTS

if TYPE_CHECKING:
    from ..config import SceneSettings

logger = logging.getLogger(__name__)

CLASS_NAMES = ("sky", "building", "road", "vegetation", "vehicle")

# Class layout. One RGB step and one depth step have the same squared length
# STEP_SQ. Most of the RGB step runs along a chroma axis orthogonal to the
# grey diagonal (the luma weights minus their grey part, so classes stay
# distinct in luminance); the rest is a per-channel brightness step sized so
# a uniform colour shift ties a pixel with its brighter neighbour only at
# SHIFT_TIE. Entropy under a colour shift then rises monotonically up to
# MAX_COLOR_SHIFT.
DEPTH_STEP = 0.12
STEP_SQ = DEPTH_STEP ** 2
SHIFT_TIE = 0.35
MAX_COLOR_SHIFT = 0.25
BRIGHTNESS_STEP = STEP_SQ / (3.0 * SHIFT_TIE)
CHROMA_STEP = math.sqrt(STEP_SQ - 3.0 * BRIGHTNESS_STEP ** 2)
_chroma = LUMA_WEIGHTS - LUMA_WEIGHTS.mean()
CHROMA_AXIS = _chroma / np.linalg.norm(_chroma)
MAX_CLASSES = 7

WAVE_AMPLITUDE_PX = 1.5
WAVE_LENGTH_PX = 24.0


@dataclass(frozen=True)
class SceneSpec:
    width: int = 64
    height: int = 64
    num_classes: int = 5
    seed: int = 0
    pixel_noise_sigma: float = 0.01
    bands_per_half: int = 5
    drift_px_per_s: float = 2.0

    @classmethod
    def from_settings(cls, scene: "SceneSettings", seed: int) -> "SceneSpec":
        return cls(
            width=scene.width,
            height=scene.height,
            num_classes=scene.num_classes,
            seed=seed,
            pixel_noise_sigma=scene.pixel_noise_sigma,
            bands_per_half=scene.bands_per_half,
            drift_px_per_s=scene.drift_px_per_s,
        )

    def validate(self) -> None:
        problems = []
        if not 2 <= self.num_classes <= MAX_CLASSES:
            problems.append(f"num_classes must be in [2, {MAX_CLASSES}] (distinct prototypes available)")
        if self.width < 8 or self.height < 8 or self.width % 2:
            problems.append("width and height must be >= 8, width even")
        if self.bands_per_half < 2:
            problems.append("bands_per_half must be >= 2")
        elif self.width // 2 < self.bands_per_half * 4:
            problems.append("bands too narrow for the image width")
        if self.pixel_noise_sigma < 0:
            problems.append("pixel_noise_sigma must be >= 0")
        if problems:
            raise ScenarioError("degenerate scene spec", problems)


@dataclass(frozen=True)
class ClassPrototype:
    class_id: int
    name: str
    rgb_mean: tuple[float, float, float]
    depth_mean: float


@dataclass(frozen=True)
class GroundTruthBundle:
    rgb: np.ndarray      # H x W x 3, float in [0, 1]
    depth: np.ndarray    # H x W, float in [0, 1]
    labels: np.ndarray   # H x W, int class ids
    stamp: int           # ms


@lru_cache(maxsize=None)
def prototypes(num_classes: int) -> tuple[ClassPrototype, ...]:
    """Evenly spaced chain in RGB and depth, point-symmetric about 0.5."""
    if not 2 <= num_classes <= MAX_CLASSES:
        raise ScenarioError("degenerate scene spec", [f"no prototype set for {num_classes} classes"])
    centre = (num_classes - 1) / 2.0
    rgb_step = BRIGHTNESS_STEP + CHROMA_STEP * CHROMA_AXIS
    out = []
    for k in range(num_classes):
        rgb = 0.5 + (k - centre) * rgb_step
        name = CLASS_NAMES[k] if k < len(CLASS_NAMES) else f"class_{k}"
        out.append(ClassPrototype(k, name, tuple(float(c) for c in rgb), 0.5 + (k - centre) * DEPTH_STEP))
    return tuple(out)


def prototype_matrix(num_classes: int, modality: str) -> np.ndarray:
    """K x D feature means for 'rgb' (D=3), 'depth' (D=1) or 'fused' (D=4)."""
    protos = prototypes(num_classes)
    rgb = np.array([p.rgb_mean for p in protos])
    depth = np.array([[p.depth_mean] for p in protos])
    if modality == "rgb":
        return rgb
    if modality == "depth":
        return depth
    if modality == "fused":
        return np.hstack([rgb, depth])
    raise ValueError(f"unknown modality {modality!r}")


@lru_cache(maxsize=64)
def band_classes(num_classes: int, bands: int, seed: int) -> tuple[int, ...]:
    """
    Class of each left-half band, starting at the seam and walking outwards.

    A seeded +-1 walk, redrawn until the left half together with its mirror
    covers every class.
    """
    rng = np.random.default_rng([seed, 7919])
    start = (num_classes - 1) // 2
    for _ in range(1000):
        walk = [start]
        for _ in range(bands - 1):
            cur = walk[-1]
            steps = [s for s in (-1, 1) if 0 <= cur + s < num_classes]
            walk.append(cur + int(rng.choice(steps)))
        seen = set(walk)
        if all(k in seen or (num_classes - 1 - k) in seen for k in range(num_classes)):
            return tuple(walk)
    raise ScenarioError("degenerate scene spec", ["too few bands to cover every class"])


def _label_mask(t_ms: int, spec: SceneSpec) -> np.ndarray:
    half = spec.width // 2
    walk = band_classes(spec.num_classes, spec.bands_per_half, spec.seed)
    phase_rng = np.random.default_rng([spec.seed, 104729])
    phases = phase_rng.uniform(0.0, 2.0 * math.pi, size=spec.bands_per_half - 1)

    omega = spec.drift_px_per_s / WAVE_AMPLITUDE_PX
    t = t_ms / 1000.0
    ys = np.arange(spec.height)[:, None]
    xs = np.arange(half)[None, :] + 0.5

    # Distance from the seam, in px, for each column of the left half.
    from_seam = half - xs
    band_width = half / spec.bands_per_half
    band = np.zeros((spec.height, half), dtype=np.int64)
    for i in range(1, spec.bands_per_half):
        edge = i * band_width + WAVE_AMPLITUDE_PX * np.sin(
            2.0 * math.pi * ys / WAVE_LENGTH_PX + phases[i - 1] + omega * t
        )
        band += (from_seam > edge).astype(np.int64)

    left = np.asarray(walk)[band]
    right = (spec.num_classes - 1 - left)[:, ::-1]
    return np.hstack([left, right])


@lru_cache(maxsize=256)
def generate_frame(t_ms: int, spec: SceneSpec) -> GroundTruthBundle:
    """Deterministic bundle for ``(t_ms, spec)``; arrays are read-only."""
    spec.validate()
    labels = _label_mask(t_ms, spec)
    protos = prototypes(spec.num_classes)
    rgb = np.array([p.rgb_mean for p in protos])[labels]
    depth = np.array([p.depth_mean for p in protos])[labels]

    if spec.pixel_noise_sigma > 0:
        rng = np.random.default_rng([spec.seed, t_ms])
        rgb = rgb + rng.normal(0.0, spec.pixel_noise_sigma, size=rgb.shape)
        depth = depth + rng.normal(0.0, spec.pixel_noise_sigma, size=depth.shape)
    rgb = np.clip(rgb, 0.0, 1.0)
    depth = np.clip(depth, 0.0, 1.0)

    for arr in (rgb, depth, labels):
        arr.setflags(write=False)
    return GroundTruthBundle(rgb=rgb, depth=depth, labels=labels, stamp=t_ms)
