# adaptation/injector.py
"""
Uncertainty catalog and injection.

Each uncertainty binds a hidden root cause to the symptom it produces, the
symptom's criticality, and the adaptation plans known to clear it. The
managing system only ever sees symptoms; this module is ground truth for the
injector and for evaluation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Any, Iterable, Iterator, Mapping, Optional

from ..config import Thresholds
from ..errors import InjectionError
from ..logging_setup import log_sim_event
from ..sim.bus import INJECTION
from ..sim.clock import format_time, to_ms
from ..sim.eventlog import EventLog, LogRecord
from ..sim.lifecycle import (
    OUTAGE,
    AdaptationCommand,
    NodeRegistry,
    action_from_dict,
    action_name,
    action_args,
)

if TYPE_CHECKING:
    from ..config import Injection, Magnitudes

logger = logging.getLogger(__name__)

INJECTOR = "injector"
RESOLUTION_HOLD_MS = 1000


class Criticality(str, Enum):
    OK = "OK"
    WARNING = "WARNING"
    ERROR = "ERROR"

    @property
    def rank(self) -> int:
        return {"OK": 0, "WARNING": 1, "ERROR": 2}[self.value]


class Symptom(str, Enum):
    S1 = "S1"  # camera topic frequency
    S2 = "S2"  # fusion topic frequency
    S3 = "S3"  # segmentation topic frequency
    S4 = "S4"  # segmentation entropy
    S5 = "S5"  # camera sharpness

    @property
    def criticality(self) -> Criticality:
        return SYMPTOM_CRITICALITY[self]

    @property
    def location(self) -> str:
        return SYMPTOM_LOCATION[self]


SYMPTOM_CRITICALITY = {
    Symptom.S1: Criticality.ERROR,
    Symptom.S2: Criticality.ERROR,
    Symptom.S3: Criticality.ERROR,
    Symptom.S4: Criticality.WARNING,
    Symptom.S5: Criticality.OK,
}
SYMPTOM_LOCATION = {
    Symptom.S1: "camera",
    Symptom.S2: "fusion",
    Symptom.S3: "segmentation",
    Symptom.S4: "segmentation",
    Symptom.S5: "camera",
}
FREQUENCY_TOPIC = {
    Symptom.S1: "/camera/image",
    Symptom.S2: "/fusion/output",
    Symptom.S3: "/segmentation/output",
}


def symptom_holds(symptom: Symptom, frequencies: Mapping[str, float], entropy: Optional[float],
                  sharpness: Optional[float], thresholds: Thresholds) -> bool:
    """Whether the raw signal behind ``symptom`` is abnormal. Missing data never is."""
    if symptom in FREQUENCY_TOPIC:
        return frequencies.get(FREQUENCY_TOPIC[symptom], 0.0) < thresholds.freq_min_hz
    if symptom is Symptom.S4:
        return entropy is not None and entropy > thresholds.entropy_max
    return sharpness is not None and sharpness < thresholds.sharpness_min


# ── Catalog ───────────────────────────────────────────────────────────────────
@dataclass(frozen=True)
class AdaptationTemplate:
    """Command pattern; ``args`` must match exactly when given."""
    target: str
    action: str
    args: tuple[tuple[str, Any], ...] = ()

    def matches(self, target: str, action: str, args: Mapping[str, Any]) -> bool:
        if target != self.target or action != self.action:
            return False
        return all(_same(args.get(k), v) for k, v in self.args)

    def matches_command(self, cmd: AdaptationCommand) -> bool:
        return self.matches(cmd.target, action_name(cmd.action), action_args(cmd.action))

    def to_command(self, issued_at: int, issuer: str) -> AdaptationCommand:
        return AdaptationCommand(self.target, action_from_dict(self.action, dict(self.args)), issued_at, issuer)


def _same(a: Any, b: Any) -> bool:
    if isinstance(a, str) or isinstance(b, str):
        return str(a).lower() == str(b).lower()
    return a == b


def _t(target: str, action: str, **args: Any) -> AdaptationTemplate:
    return AdaptationTemplate(target, action, tuple(args.items()))


Plan = tuple[AdaptationTemplate, ...]


@dataclass(frozen=True)
class Uncertainty:
    id: str
    description: str
    kind: str
    symptom: Symptom
    target: str
    resolutions: tuple[Plan, ...]
    severity: Optional[str] = None
    setup: Plan = ()

    @property
    def criticality(self) -> Criticality:
        return self.symptom.criticality

    @property
    def resolving_adaptations(self) -> Plan:
        """Least-impact plan."""
        return self.resolutions[0]

    @property
    def persistent(self) -> bool:
        """Clears only with a full redeploy of ``target`` (or a dedicated fix)."""
        return self.severity == "high" or self.kind == "defocus"

    @property
    def requires_redeploy(self) -> bool:
        """True when every resolution plan redeploys, i.e. nothing lighter clears it."""
        return all(any(t.action == "Redeploy" for t in plan) for plan in self.resolutions)

    def templates(self) -> Iterator[AdaptationTemplate]:
        for plan in self.resolutions:
            yield from plan


def _outage(uid: str, node: str, symptom: Symptom, severity: str) -> Uncertainty:
    redeploy = (_t(node, "Redeploy"),)
    plans = ((_t(node, "Restart"),), redeploy) if severity == "low" else (redeploy,)
    return Uncertainty(uid, f"{node} outage ({severity} severity)", "outage", symptom, node, plans, severity)


class UncertaintyCatalog:
    def __init__(self, entries: Iterable[Uncertainty]):
        self._entries = {u.id: u for u in entries}

    def get(self, uid: str) -> Optional[Uncertainty]:
        return self._entries.get(uid)

    def __getitem__(self, uid: str) -> Uncertainty:
        try:
            return self._entries[uid]
        except KeyError:
            raise InjectionError(f"unknown uncertainty {uid!r}") from None

    def __contains__(self, uid: str) -> bool:
        return uid in self._entries

    def __iter__(self) -> Iterator[Uncertainty]:
        return iter(self._entries.values())

    def __len__(self) -> int:
        return len(self._entries)

    def by_criticality(self, level: Criticality) -> list[Uncertainty]:
        return [u for u in self if u.criticality is level]


CATALOG = UncertaintyCatalog([
    _outage("U01", "camera", Symptom.S1, "low"),
    _outage("U02", "camera", Symptom.S1, "high"),
    _outage("U03", "fusion", Symptom.S2, "low"),
    _outage("U04", "fusion", Symptom.S2, "high"),
    _outage("U05", "segmentation", Symptom.S3, "low"),
    _outage("U06", "segmentation", Symptom.S3, "high"),
    Uncertainty(
        "U07", "colour shift in camera images", "color_shift", Symptom.S4, "camera",
        ((_t("enhancement", "Activate"),
          _t("fusion", "ChangeSubscription", from_topic="/camera/image", to_topic="/enhancement/image")),),
    ),
    Uncertainty(
        "U08", "enhancement applied to clean images", "enhancement_on_clean", Symptom.S4, "enhancement",
        ((_t("fusion", "ChangeSubscription", from_topic="/enhancement/image", to_topic="/camera/image"),),),
        setup=(_t("enhancement", "Activate"),
               _t("fusion", "ChangeSubscription", from_topic="/camera/image", to_topic="/enhancement/image")),
    ),
    Uncertainty(
        "U09", "RGB-D misalignment", "misalignment", Symptom.S4, "fusion",
        ((_t("fusion", "SetParameter", name="recalibrate", value=True),),),
    ),
    Uncertainty(
        "U10", "noisy depth images", "depth_noise", Symptom.S4, "depth",
        ((_t("fusion", "SetParameter", name="modality", value="rgb_only"),
          _t("segmentation", "SetParameter", name="modality", value="rgb")),),
    ),
    Uncertainty(
        "U11", "camera defocus", "defocus", Symptom.S5, "camera",
        ((_t("camera", "SetParameter", name="focus", value="auto"),), (_t("camera", "Redeploy"),)),
    ),
])


# ── Injection ─────────────────────────────────────────────────────────────────
@dataclass(frozen=True)
class InjectionRecord:
    uncertainty: str
    t: int
    accepted: bool
    reason: str = ""


@dataclass
class Injector:
    """Applies catalog entries to the live system at scheduled times."""
    registry: NodeRegistry
    magnitudes: "Magnitudes"
    catalog: UncertaintyCatalog = CATALOG
    records: list[InjectionRecord] = field(default_factory=list)
    _active: dict[Criticality, str] = field(default_factory=dict)

    def schedule(self, injections: Iterable["Injection"]) -> None:
        bus = self.registry.bus
        for inj in injections:
            uid = inj.uncertainty
            bus.schedule(to_ms(inj.time_s), INJECTION, INJECTOR, lambda uid=uid: self.inject(uid))

    def inject(self, uid: str) -> InjectionRecord:
        bus = self.registry.bus
        try:
            u = self.catalog[uid]
            if u.criticality in self._active:
                raise InjectionError(
                    f"{self._active[u.criticality]} already holds criticality {u.criticality.value}"
                )
        except InjectionError as e:
            record = InjectionRecord(uid, bus.now, False, str(e))
            self.records.append(record)
            bus.log.append(bus.now, "injection", INJECTOR, uncertainty=uid, accepted=False, reason=str(e))
            logger.warning(f"Injection of {uid} rejected: {e}")
            return record

        self._active[u.criticality] = uid
        bus.log.append(bus.now, "injection", INJECTOR, uncertainty=uid, accepted=True,
                       symptom=u.symptom.value, criticality=u.criticality.value,
                       severity=u.severity, target=u.target, persistent=u.persistent)
        self._apply(u)
        log_sim_event("injection", uncertainty=uid, t=format_time(bus.now))
        record = InjectionRecord(uid, bus.now, True)
        self.records.append(record)
        return record

    def _apply(self, u: Uncertainty) -> None:
        env = self.registry.env
        mags = self.magnitudes
        if u.kind == "outage":
            self.registry.get(u.target).faults.add(OUTAGE, persistent=u.severity == "high")
        elif u.kind == "color_shift":
            env.color_shift = mags.color_shift
        elif u.kind == "misalignment":
            env.misalignment = tuple(mags.misalignment_px)
        elif u.kind == "depth_noise":
            env.depth_noise_sigma = mags.depth_noise_sigma
        elif u.kind == "defocus":
            self.registry.get(u.target).set_defocus(mags.blur_sigma)
        for template in u.setup:
            self.registry.apply_adaptation(template.to_command(self.registry.bus.now, INJECTOR))


# ── Ground-truth resolution check ─────────────────────────────────────────────
def injection_time(uid: str, log: EventLog) -> Optional[int]:
    for rec in log.of_kind("injection"):
        if rec.detail.get("uncertainty") == uid and rec.detail.get("accepted"):
            return rec.t
    return None


def executed_commands(log: EventLog) -> list[LogRecord]:
    """Accepted adaptation records not issued by the injector."""
    return [r for r in log.of_kind("adaptation")
            if r.detail.get("accepted") and r.detail.get("issuer") != INJECTOR]


def _sample_abnormal(symptom: Symptom, rec: LogRecord, thresholds: Thresholds) -> bool:
    d = rec.detail
    return symptom_holds(symptom, d.get("frequencies", {}), d.get("entropy"), d.get("sharpness"), thresholds)


_SIGNAL_STAMP = {Symptom.S4: "entropy_stamp", Symptom.S5: "sharpness_stamp"}


def _observes(symptom: Symptom, rec: LogRecord, start: int) -> bool:
    """
    Whether the sample measured the symptom's signal after ``start``.
    Frequencies are always current; entropy and sharpness keep the value of
    the last frame that reached the monitor, which may predate the injection.
    """
    key = _SIGNAL_STAMP.get(symptom)
    if key is None:
        return True
    stamp = rec.detail.get(key)
    return stamp is not None and stamp > start


def resolved_check(uid: str, log: EventLog, thresholds: Thresholds = Thresholds(),
                   injected_at: Optional[int] = None) -> Optional[int]:
    """
    Time the symptom of ``uid`` went back to nominal for good, or None.

    Resolved means: an adaptation was executed, and from a diagnostics sample
    after it the signal stayed nominal for at least one second. When the
    signal was measured before the first adaptation, the symptom must also
    have shown there, and the hold starts after its first abnormal sample.
    Samples that still carry a pre-injection entropy or sharpness value are
    not measurements of the injected condition and are skipped.
    """
    u = CATALOG[uid]
    start = injection_time(uid, log) if injected_at is None else injected_at
    if start is None:
        return None

    commands = [r.t for r in executed_commands(log) if r.t >= start]
    if not commands:
        return None
    samples = [r for r in log.of_kind("diagnostics") if r.t >= start and _observes(u.symptom, r, start)]
    abnormal = [r.t for r in samples if _sample_abnormal(u.symptom, r, thresholds)]
    if abnormal:
        after = max(abnormal[0], commands[0])
    elif any(r.t <= commands[0] for r in samples):
        return None
    else:
        after = commands[0]

    streak_start: Optional[int] = None
    for rec in samples:
        if rec.t <= after:
            continue
        if _sample_abnormal(u.symptom, rec, thresholds):
            streak_start = None
            continue
        if streak_start is None:
            streak_start = rec.t
        if rec.t - streak_start >= RESOLUTION_HOLD_MS:
            return streak_start
    return None
