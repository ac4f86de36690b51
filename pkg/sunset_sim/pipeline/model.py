# pipeline/model.py
"""
Nearest-prototype softmax segmentation model.

For a feature vector x and class mean mu_c the logit is -||x - mu_c||^2 / tau.
Labels are the argmax of the softmax; the uncertainty signal is the mean
per-pixel Shannon entropy (nats).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional

import numpy as np
from scipy.special import entr, softmax

from ..errors import ModelError
from .scene import prototype_matrix

if TYPE_CHECKING:
    from ..config import SimulationSettings

logger = logging.getLogger(__name__)

MODEL_MODALITIES = ("fused", "rgb", "depth")

# Fusion output modality each model expects.
FRAME_MODALITY = {"fused": "fused", "rgb": "rgb_only", "depth": "depth_only"}


@dataclass(frozen=True)
class ModelConfig:
    modality: str
    prototypes: np.ndarray = field(repr=False)
    tau: float

    @classmethod
    def for_modality(cls, modality: str, settings: "SimulationSettings") -> "ModelConfig":
        if modality not in MODEL_MODALITIES:
            raise ModelError(f"unknown model modality {modality!r}")
        return cls(
            modality=modality,
            prototypes=prototype_matrix(settings.scene.num_classes, modality),
            tau=settings.model.tau[modality],
        )

    @property
    def num_classes(self) -> int:
        return self.prototypes.shape[0]


@dataclass
class SegmentationResult:
    labels: np.ndarray
    mean_entropy: float
    stamp: int
    modality: str
    iou: Optional[float] = None
    logits: Optional[np.ndarray] = field(default=None, repr=False)

    def log_detail(self) -> dict:
        detail = {"entropy": self.mean_entropy, "modality": self.modality}
        if self.iou is not None:
            detail["iou"] = self.iou
        return detail


def features(rgb: Optional[np.ndarray], depth: Optional[np.ndarray], modality: str) -> np.ndarray:
    """Stack per-pixel features into H x W x D for the given model modality."""
    if modality == "rgb":
        if rgb is None:
            raise ModelError("modality mismatch")
        return rgb
    if modality == "depth":
        if depth is None:
            raise ModelError("modality mismatch")
        return depth[:, :, None]
    if rgb is None or depth is None:
        raise ModelError("modality mismatch")
    return np.concatenate([rgb, depth[:, :, None]], axis=2)


def logits_for(x: np.ndarray, model: ModelConfig) -> np.ndarray:
    diff = x[:, :, None, :] - model.prototypes[None, None, :, :]
    return -np.sum(diff * diff, axis=-1) / model.tau


def pixel_entropy(probs: np.ndarray) -> np.ndarray:
    return entr(probs).sum(axis=-1)


def segment_arrays(rgb: Optional[np.ndarray], depth: Optional[np.ndarray], model: ModelConfig,
                   stamp: int = 0, keep_logits: bool = False) -> SegmentationResult:
    x = features(rgb, depth, model.modality)
    logits = logits_for(x, model)
    probs = softmax(logits, axis=-1)
    result = SegmentationResult(
        labels=np.argmax(probs, axis=-1),
        mean_entropy=float(pixel_entropy(probs).mean()),
        stamp=stamp,
        modality=model.modality,
        logits=logits if keep_logits else None,
    )
    return result


def segment(frame, model: ModelConfig, keep_logits: bool = False) -> SegmentationResult:
    """Segment a fused frame; its modality must be the one this model serves."""
    if FRAME_MODALITY[model.modality] != frame.modality:
        raise ModelError("modality mismatch")
    return segment_arrays(frame.rgb, frame.depth, model, stamp=frame.stamp, keep_logits=keep_logits)
