# pipeline/imaging.py
"""Image degradations, enhancement, sharpness and RGB-D alignment search."""

from __future__ import annotations

import logging
from typing import Optional, Sequence, Union

import numpy as np
from scipy import ndimage

from ..errors import CalibrationError

logger = logging.getLogger(__name__)

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

Offset = tuple[int, int]
Delta = Union[float, Sequence[float]]


def luminance(rgb: np.ndarray) -> np.ndarray:
    return rgb @ LUMA_WEIGHTS


def color_shift(rgb: np.ndarray, delta: Delta) -> np.ndarray:
    """Add ``delta`` to each channel, clamped to [0, 1]."""
    return np.clip(rgb + np.asarray(delta, dtype=float), 0.0, 1.0)


def enhance(rgb: np.ndarray, delta: Delta) -> np.ndarray:
    """Reverse colour shift: clamp(rgb - delta)."""
    return np.clip(rgb - np.asarray(delta, dtype=float), 0.0, 1.0)


def blur(rgb: np.ndarray, sigma: float) -> np.ndarray:
    if sigma <= 0:
        return rgb
    return ndimage.gaussian_filter(rgb, sigma=(sigma, sigma, 0), mode="nearest")


def shift_image(img: np.ndarray, offset: Offset) -> np.ndarray:
    """Translate by whole pixels; (dx, dy) moves content right/down."""
    dx, dy = offset
    if dx == 0 and dy == 0:
        return img
    return ndimage.shift(img, (dy, dx), order=0, mode="nearest")


def add_depth_noise(depth: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    if sigma <= 0:
        return depth
    return np.clip(depth + rng.normal(0.0, sigma, size=depth.shape), 0.0, 1.0)


def sharpness(rgb: np.ndarray) -> float:
    """Variance of the discrete Laplacian of the luminance."""
    return float(np.var(ndimage.laplace(luminance(rgb))))


def edge_map(img: np.ndarray) -> np.ndarray:
    """Gradient magnitude normalised to a peak of 1 (all zeros if flat)."""
    gy, gx = np.gradient(img.astype(float))
    mag = np.hypot(gx, gy)
    peak = mag.max()
    return mag / peak if peak > 0 else mag


def alignment_cost(rgb: np.ndarray, depth: np.ndarray, offset: Offset) -> float:
    ref = edge_map(luminance(rgb))
    moved = edge_map(shift_image(depth, offset))
    return float(np.mean((moved - ref) ** 2))


def recalibrate_offset(rgb: Optional[np.ndarray], depth: Optional[np.ndarray], radius: int = 4) -> Offset:
    """
    Exhaustive search over integer offsets in [-radius, radius]^2.

    Returns the offset that best lines depth edges up with luminance edges.
    Equal costs go to the smaller |dx| + |dy|.
    """
    if rgb is None or depth is None:
        raise CalibrationError("no data")
    best: Optional[tuple[float, int, int, int]] = None
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            key = (alignment_cost(rgb, depth, (dx, dy)), abs(dx) + abs(dy), dx, dy)
            if best is None or key < best:
                best = key
    assert best is not None
    _, _, dx, dy = best
    logger.debug(f"recalibration picked offset ({dx}, {dy}) cost={best[0]:.5f}")
    return dx, dy
