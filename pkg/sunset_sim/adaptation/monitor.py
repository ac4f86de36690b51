# adaptation/monitor.py
"""
Information-collecting node.

Samples topic frequencies, the latest segmentation entropy, the latest camera
sharpness and all lifecycle states, derives symptom observations, logs the
result and publishes it on /diagnostics for the managing system.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Mapping, Optional, Sequence

from ..config import Thresholds
from ..pipeline import imaging
from ..sim.bus import Message
from ..sim.clock import format_time
from ..sim.lifecycle import TOPICS, LifecycleNode, LifecycleState, NodeContext
from .injector import Criticality, Symptom, symptom_holds

logger = logging.getLogger(__name__)

MONITOR = "monitor"
DIAGNOSTICS_TOPIC = "/diagnostics"
MONITORED_TOPICS = tuple(t for t in TOPICS if t != DIAGNOSTICS_TOPIC)


@dataclass(frozen=True)
class SymptomObservation:
    symptom: Symptom
    criticality: Criticality
    location: str
    first_observed: int

    def to_dict(self) -> dict:
        return {
            "symptom": self.symptom.value,
            "criticality": self.criticality.value,
            "location": self.location,
            "first_observed": format_time(self.first_observed),
        }


@dataclass(frozen=True)
class DiagnosticsSnapshot:
    t: int
    topic_frequencies: Mapping[str, float]
    mean_entropy: Optional[float]
    sharpness: Optional[float]
    lifecycle_states: Mapping[str, LifecycleState]
    symptoms: tuple[SymptomObservation, ...] = ()
    # capture stamps of the frames behind mean_entropy and sharpness
    entropy_stamp: Optional[int] = None
    sharpness_stamp: Optional[int] = None

    def frequency(self, topic: str) -> float:
        return self.topic_frequencies.get(topic, 0.0)

    def has(self, symptom: Symptom) -> bool:
        return any(o.symptom is symptom for o in self.symptoms)

    def to_dict(self) -> dict:
        return {
            "frequencies": dict(self.topic_frequencies),
            "entropy": self.mean_entropy,
            "sharpness": self.sharpness,
            "entropy_stamp": self.entropy_stamp,
            "sharpness_stamp": self.sharpness_stamp,
            "states": {k: v.value for k, v in self.lifecycle_states.items()},
            "symptoms": [o.to_dict() for o in self.symptoms],
        }


def detect_symptoms(snapshot: DiagnosticsSnapshot, thresholds: Thresholds,
                    previous: Sequence[SymptomObservation] = ()) -> tuple[SymptomObservation, ...]:
    """
    Pure function of the snapshot. ``previous`` is the prior observation list;
    a symptom that held there keeps its first_observed time.
    """
    carried = {o.symptom: o.first_observed for o in previous}
    out = []
    for symptom in Symptom:
        if symptom_holds(symptom, snapshot.topic_frequencies, snapshot.mean_entropy,
                         snapshot.sharpness, thresholds):
            out.append(SymptomObservation(
                symptom=symptom,
                criticality=symptom.criticality,
                location=symptom.location,
                first_observed=carried.get(symptom, snapshot.t),
            ))
    return tuple(out)


class MonitorNode(LifecycleNode):
    node_id = MONITOR

    def __init__(self, ctx: NodeContext):
        super().__init__(ctx)
        self.period_s = ctx.settings.monitor.period_s
        self.window_s = ctx.settings.monitor.window_s
        self.thresholds = ctx.settings.thresholds
        self.latest_entropy: Optional[float] = None
        self.latest_sharpness: Optional[float] = None
        self.entropy_stamp: Optional[int] = None
        self.sharpness_stamp: Optional[int] = None
        self.previous: tuple[SymptomObservation, ...] = ()
        self.snapshots: list[DiagnosticsSnapshot] = []
        self.subscribe("/segmentation/output", self.on_segmentation)
        self.subscribe("/camera/image", self.on_camera)
        self.create_timer(self.period_s, self.tick)

    def on_segmentation(self, msg: Message) -> None:
        self.latest_entropy = msg.payload.mean_entropy
        self.entropy_stamp = msg.stamp

    def on_camera(self, msg: Message) -> None:
        self.latest_sharpness = imaging.sharpness(msg.payload.image)
        self.sharpness_stamp = msg.stamp

    def sample(self, now: int) -> DiagnosticsSnapshot:
        bus = self.bus
        return DiagnosticsSnapshot(
            t=now,
            topic_frequencies={t: bus.estimate_frequency(t, self.window_s, now) for t in MONITORED_TOPICS},
            mean_entropy=self.latest_entropy,
            sharpness=self.latest_sharpness,
            lifecycle_states=self.ctx.registry.states(),
            entropy_stamp=self.entropy_stamp,
            sharpness_stamp=self.sharpness_stamp,
        )

    def tick(self) -> None:
        if not self.active:
            return
        snapshot = self.sample(self.bus.now)
        snapshot = replace(snapshot, symptoms=detect_symptoms(snapshot, self.thresholds, self.previous))
        self.previous = snapshot.symptoms
        self.snapshots.append(snapshot)
        self.log("diagnostics", **snapshot.to_dict())
        self.publish(DIAGNOSTICS_TOPIC, snapshot)
