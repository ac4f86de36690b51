# pipeline/nodes.py
"""
The five managed nodes: camera, depth sensor, image enhancement, sensor
fusion and segmentation.

Sensor nodes read the procedural scene on a shared timer grid. External
degradations come from the shared ``Environment``; node-internal faults
(outages, defocus) live on each node and vanish with it on redeploy.
"""

from __future__ import annotations

import logging
from collections import deque
from typing import Any, Optional, Sequence

import numpy as np

from ..errors import CalibrationError, LifecycleError, ModelError
from ..evaluation.metrics import compute_iou
from ..sim.bus import Message
from ..sim.clock import to_ms
from ..sim.lifecycle import DEFOCUS, OUTAGE, LifecycleNode, NodeContext, NodeRegistry
from . import imaging
from .frames import DepthFrame, FusedFrame, RgbFrame
from .model import FRAME_MODALITY, MODEL_MODALITIES, ModelConfig, segment
from .scene import SceneSpec, generate_frame

logger = logging.getLogger(__name__)

CAMERA_TOPIC = "/camera/image"
DEPTH_TOPIC = "/depth/image"
ENHANCEMENT_TOPIC = "/enhancement/image"
FUSION_TOPIC = "/fusion/output"
SEGMENTATION_TOPIC = "/segmentation/output"
DIAGNOSTICS_TOPIC = "/diagnostics"

FUSION_MODALITIES = ("fused", "rgb_only", "depth_only")


def _bool(value: Any) -> bool:
    if isinstance(value, str):
        return value.strip().lower() in ("1", "true", "yes", "on")
    return bool(value)


class PipelineNode(LifecycleNode):
    """Shared helpers for nodes that may suffer an outage."""

    def __init__(self, ctx: NodeContext):
        super().__init__(ctx)
        self.scene_spec = SceneSpec.from_settings(ctx.settings.scene, ctx.seed)

    @property
    def env(self):
        return self.ctx.env

    @property
    def settings(self):
        return self.ctx.settings

    @property
    def can_publish(self) -> bool:
        return self.active and not self.faults.has(OUTAGE)


class CameraNode(PipelineNode):
    node_id = "camera"
    PARAMETERS = ("focus", "frame_rate_hz")

    def __init__(self, ctx: NodeContext):
        super().__init__(ctx)
        self.focus = "fixed"
        self.frame_rate_hz = ctx.settings.frame_rate_hz
        self.defocus_sigma = 0.0
        self._timer = self.create_timer(1.0 / self.frame_rate_hz, self.tick)

    def set_defocus(self, sigma: float) -> None:
        self.defocus_sigma = float(sigma)
        self.faults.add(DEFOCUS, persistent=True)

    def refocus(self) -> None:
        self.defocus_sigma = 0.0
        self.faults.persistent.discard(DEFOCUS)
        self.faults.transient.discard(DEFOCUS)
        self.log("refocus")

    def coerce_parameter(self, name: str, value: Any) -> Any:
        if name == "frame_rate_hz":
            value = float(value)
            if value <= 0:
                raise LifecycleError("invalid value")
        return value

    def on_parameter_changed(self, name: str, value: Any) -> None:
        if name == "focus":
            self.refocus()
        elif name == "frame_rate_hz":
            self._timer.cancel()
            self._timers.remove(self._timer)
            self._timer = self.create_timer(1.0 / value, self.tick)

    def capture(self, t_ms: int) -> RgbFrame:
        rgb = generate_frame(t_ms, self.scene_spec).rgb
        tags = []
        if self.env.color_shift:
            rgb = imaging.color_shift(rgb, self.env.color_shift)
            tags.append("color_shift")
        if self.defocus_sigma > 0:
            rgb = imaging.blur(rgb, self.defocus_sigma)
            tags.append("defocus")
        return RgbFrame(image=rgb, stamp=t_ms, tags=tuple(tags))

    def tick(self) -> None:
        if not self.can_publish:
            return
        frame = self.capture(self.bus.now)
        self.publish(CAMERA_TOPIC, frame, stamp=frame.stamp)


class DepthNode(PipelineNode):
    node_id = "depth"

    def __init__(self, ctx: NodeContext):
        super().__init__(ctx)
        self._timer = self.create_timer(1.0 / ctx.settings.frame_rate_hz, self.tick)

    def capture(self, t_ms: int) -> DepthFrame:
        depth = generate_frame(t_ms, self.scene_spec).depth
        tags: tuple[str, ...] = ()
        if self.env.depth_noise_sigma > 0:
            rng = np.random.default_rng([self.scene_spec.seed, t_ms, 1])
            depth = imaging.add_depth_noise(depth, self.env.depth_noise_sigma, rng)
            tags = ("depth_noise",)
        return DepthFrame(image=depth, stamp=t_ms, tags=tags)

    def tick(self) -> None:
        if not self.can_publish:
            return
        frame = self.capture(self.bus.now)
        self.publish(DEPTH_TOPIC, frame, stamp=frame.stamp)


class EnhancementNode(PipelineNode):
    node_id = "enhancement"
    PARAMETERS = ("delta",)

    def __init__(self, ctx: NodeContext):
        super().__init__(ctx)
        self.delta = [ctx.settings.magnitudes.color_shift] * 3
        self.subscribe(CAMERA_TOPIC, self.on_image)

    def coerce_parameter(self, name: str, value: Any) -> Any:
        if isinstance(value, (int, float)):
            return [float(value)] * 3
        try:
            values = [float(v) for v in value]
        except (TypeError, ValueError):
            raise LifecycleError("invalid value") from None
        if len(values) != 3:
            raise LifecycleError("invalid value")
        return values

    def on_image(self, msg: Message) -> None:
        if not self.can_publish:
            return
        frame: RgbFrame = msg.payload
        out = RgbFrame(image=imaging.enhance(frame.image, self.delta), stamp=frame.stamp,
                       tags=frame.tags + ("enhanced",))
        self.publish(ENHANCEMENT_TOPIC, out, stamp=frame.stamp)


def match_pairs(rgb_queue: Sequence[RgbFrame], depth_queue: Sequence[DepthFrame],
                tolerance_ms: int) -> Optional[tuple[int, int]]:
    """
    Indices of the RGB/depth pair with the smallest stamp difference within
    ``tolerance_ms``, or None. Ties go to the earliest RGB, then earliest depth.
    """
    best: Optional[tuple[int, int, int]] = None
    for i, rgb in enumerate(rgb_queue):
        for j, depth in enumerate(depth_queue):
            gap = abs(rgb.stamp - depth.stamp)
            if gap <= tolerance_ms and (best is None or gap < best[0]):
                best = (gap, i, j)
    return None if best is None else (best[1], best[2])


class FusionNode(PipelineNode):
    node_id = "fusion"
    PARAMETERS = ("modality", "recalibrate", "pairing_tolerance_s")

    def __init__(self, ctx: NodeContext):
        super().__init__(ctx)
        fusion = ctx.settings.fusion
        self.modality = "fused"
        self.recalibrate = False
        self.pairing_tolerance_s = fusion.pairing_tolerance_s
        self.search_radius = fusion.search_radius
        self.calibration_offset: tuple[int, int] = (0, 0)
        self.rgb_queue: deque[RgbFrame] = deque(maxlen=fusion.queue_depth)
        self.depth_queue: deque[DepthFrame] = deque(maxlen=fusion.queue_depth)
        self._last_pair: Optional[tuple[np.ndarray, np.ndarray]] = None
        self.subscribe(CAMERA_TOPIC, self.on_rgb)
        self.subscribe(DEPTH_TOPIC, self.on_depth)

    # ── Parameters ────────────────────────────────────────────────────────────
    def coerce_parameter(self, name: str, value: Any) -> Any:
        if name == "modality":
            if value not in FUSION_MODALITIES:
                raise LifecycleError("invalid value")
            return value
        if name == "recalibrate":
            return _bool(value)
        if name == "pairing_tolerance_s":
            value = float(value)
            if value < 0:
                raise LifecycleError("invalid value")
        return value

    def on_parameter_changed(self, name: str, value: Any) -> None:
        if name == "recalibrate" and value:
            self.recalibrate = False
            self.run_recalibration()
        elif name == "modality":
            self.rgb_queue.clear()
            self.depth_queue.clear()

    def run_recalibration(self) -> tuple[int, int]:
        rgb, depth = self._last_pair if self._last_pair else (None, None)
        try:
            self.calibration_offset = imaging.recalibrate_offset(rgb, depth, self.search_radius)
        except CalibrationError as e:
            raise LifecycleError(str(e)) from e
        self.log("recalibrated", offset=list(self.calibration_offset))
        return self.calibration_offset

    # ── Inputs ────────────────────────────────────────────────────────────────
    def _enqueue(self, queue: deque, frame: Any, topic: str) -> None:
        if len(queue) == queue.maxlen:
            dropped = queue[0]
            self.log("queue_overflow", topic=topic, stamp=dropped.stamp)
        queue.append(frame)

    def on_rgb(self, msg: Message) -> None:
        if not self.active:
            return
        frame: RgbFrame = msg.payload
        if self.modality == "rgb_only":
            self._emit(FusedFrame(rgb=frame.image, depth=None, modality="rgb_only", stamp=frame.stamp))
        elif self.modality == "fused":
            self._enqueue(self.rgb_queue, frame, msg.topic)
            self._pair()

    def on_depth(self, msg: Message) -> None:
        if not self.active:
            return
        frame: DepthFrame = msg.payload
        raw = imaging.shift_image(frame.image, self.env.misalignment)
        frame = DepthFrame(image=raw, stamp=frame.stamp, tags=frame.tags)
        if self.modality == "depth_only":
            aligned = imaging.shift_image(raw, self.calibration_offset)
            self._emit(FusedFrame(rgb=None, depth=aligned, modality="depth_only", stamp=frame.stamp,
                                  calibration_offset=self.calibration_offset))
        elif self.modality == "fused":
            self._enqueue(self.depth_queue, frame, msg.topic)
            self._pair()

    def _pair(self) -> None:
        match = match_pairs(self.rgb_queue, self.depth_queue, to_ms(self.pairing_tolerance_s))
        if match is None:
            return
        i, j = match
        rgb = self.rgb_queue[i]
        depth = self.depth_queue[j]
        del self.rgb_queue[i]
        del self.depth_queue[j]
        self._last_pair = (rgb.image, depth.image)
        aligned = imaging.shift_image(depth.image, self.calibration_offset)
        self._emit(FusedFrame(rgb=rgb.image, depth=aligned, modality="fused", stamp=rgb.stamp,
                              calibration_offset=self.calibration_offset))

    def _emit(self, frame: FusedFrame) -> None:
        if self.can_publish:
            self.publish(FUSION_TOPIC, frame, stamp=frame.stamp)


class SegmentationNode(PipelineNode):
    node_id = "segmentation"
    PARAMETERS = ("modality", "debug_logits")

    def __init__(self, ctx: NodeContext):
        super().__init__(ctx)
        self.modality = "fused"
        self.debug_logits = ctx.settings.debug_logits
        self._models: dict[str, ModelConfig] = {}
        self.subscribe(FUSION_TOPIC, self.on_fused)

    def coerce_parameter(self, name: str, value: Any) -> Any:
        if name == "modality":
            if value not in MODEL_MODALITIES:
                raise LifecycleError("invalid value")
            return value
        return _bool(value)

    def model(self) -> ModelConfig:
        if self.modality not in self._models:
            self._models[self.modality] = ModelConfig.for_modality(self.modality, self.settings)
        return self._models[self.modality]

    def on_fused(self, msg: Message) -> None:
        if not self.active:
            return
        frame: FusedFrame = msg.payload
        try:
            result = segment(frame, self.model(), keep_logits=self.debug_logits)
        except ModelError as e:
            self.log("frame_dropped", topic=msg.topic, reason=str(e),
                     expected=FRAME_MODALITY[self.modality], got=frame.modality)
            return
        # Ground-truth IoU for evaluation only.
        truth = generate_frame(frame.stamp, self.scene_spec).labels
        result.iou = compute_iou(result.labels, truth, self.scene_spec.num_classes).mean
        if self.can_publish:
            self.publish(SEGMENTATION_TOPIC, result, stamp=frame.stamp)


NODE_CLASSES: dict[str, type[PipelineNode]] = {
    cls.node_id: cls for cls in (CameraNode, DepthNode, EnhancementNode, FusionNode, SegmentationNode)
}
INITIALLY_INACTIVE = ("enhancement",)


def build_pipeline(registry: NodeRegistry) -> None:
    """Register the managed nodes in dataflow order."""
    for node_id, cls in NODE_CLASSES.items():
        registry.register(node_id, cls, autostart=node_id not in INITIALLY_INACTIVE)
