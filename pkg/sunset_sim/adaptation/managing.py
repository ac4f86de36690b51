# adaptation/managing.py
"""
Managing-system boundary and the baseline MAPE-K controller.

Controllers see ``DiagnosticsSnapshot`` values only. ``ManagingAdapter`` is
the single bridge: it receives snapshots from /diagnostics, calls the
controller and submits whatever it returns.
"""

from __future__ import annotations

import importlib
import inspect
import logging
from abc import ABC, abstractmethod
from collections import deque
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Callable, Iterator, Optional

from ..sim.bus import Bus, Message
from ..sim.lifecycle import AdaptationCommand, LifecycleState, NodeRegistry, Redeploy, SetParameter, action_name
from .injector import Criticality, Symptom
from .monitor import DIAGNOSTICS_TOPIC, DiagnosticsSnapshot

if TYPE_CHECKING:
    from ..config import SimulationSettings

logger = logging.getLogger(__name__)

RECALIBRATION_COOLDOWN_S = 2.0
REDEPLOY_COOLDOWN_EXTRA_S = 1.0


class ManagingSystem(ABC):
    """Interface every controller implements."""

    name: str = "unnamed"

    def __init__(self, settings: Optional["SimulationSettings"] = None):
        self.settings = settings

    @abstractmethod
    def step(self, snapshot: DiagnosticsSnapshot) -> list[AdaptationCommand]:
        """Return the commands to execute for this snapshot (possibly none)."""


class NoController(ManagingSystem):
    name = "none"

    def step(self, snapshot: DiagnosticsSnapshot) -> list[AdaptationCommand]:
        return []


@dataclass
class KnowledgeBase:
    """
    Recent snapshots plus the commands still pending. A command stays pending
    until its cooldown runs out; while pending it is never issued again.
    """
    history: deque = field(default_factory=lambda: deque(maxlen=32))
    pending: dict[tuple[str, str], tuple[int, int]] = field(default_factory=dict)

    def remember(self, snapshot: DiagnosticsSnapshot) -> None:
        self.history.append(snapshot)
        self.pending = {key: (at, until) for key, (at, until) in self.pending.items() if snapshot.t < until}

    def cooling(self, key: tuple[str, str], now: int) -> bool:
        entry = self.pending.get(key)
        return entry is not None and now < entry[1]

    def issue(self, key: tuple[str, str], now: int, cooldown_s: float) -> None:
        self.pending[key] = (now, now + int(round(cooldown_s * 1000)))


class BaselineController(ManagingSystem):
    """
    Two rules. ERROR: redeploy every publisher whose topic is below the
    frequency threshold. WARNING: recalibrate fusion when entropy is high.
    """

    name = "baseline"

    def __init__(self, settings: "SimulationSettings"):
        super().__init__(settings)
        self.kb = KnowledgeBase()

    def step(self, snapshot: DiagnosticsSnapshot) -> list[AdaptationCommand]:
        self.kb.remember(snapshot)
        now = snapshot.t
        commands: list[AdaptationCommand] = []
        ordered = sorted(snapshot.symptoms, key=lambda o: (-o.criticality.rank, o.symptom.value))
        for obs in ordered:
            if obs.criticality is Criticality.ERROR:
                target = obs.location
                key = (target, "Redeploy")
                if snapshot.lifecycle_states.get(target) is LifecycleState.FINALIZED or self.kb.cooling(key, now):
                    continue
                commands.append(AdaptationCommand(target, Redeploy(), now, self.name))
                self.kb.issue(key, now, self.settings.delays.redeploy_for(target) + REDEPLOY_COOLDOWN_EXTRA_S)
            elif obs.symptom is Symptom.S4:
                key = ("fusion", "recalibrate")
                if self.kb.cooling(key, now):
                    continue
                commands.append(AdaptationCommand("fusion", SetParameter("recalibrate", True), now, self.name))
                self.kb.issue(key, now, RECALIBRATION_COOLDOWN_S)
        return commands


ControllerFactory = Callable[["SimulationSettings"], ManagingSystem]


class ControllerRegistry:
    def __init__(self):
        self._factories: dict[str, ControllerFactory] = {}

    def register(self, name: str, factory: ControllerFactory) -> None:
        if name in self._factories:
            raise ValueError(f"controller {name!r} already registered")
        self._factories[name] = factory
        logger.debug(f"Registered controller {name!r}")

    def create(self, name: str, settings: "SimulationSettings") -> ManagingSystem:
        try:
            factory = self._factories[name]
        except KeyError:
            raise ValueError(f"unknown controller {name!r}") from None
        controller = factory(settings)
        controller.name = name
        return controller

    def names(self) -> list[str]:
        return sorted(self._factories)

    def __contains__(self, name: str) -> bool:
        return name in self._factories

    def __iter__(self) -> Iterator[str]:
        return iter(self.names())


CONTROLLERS = ControllerRegistry()


def register_controller(name: str, factory: ControllerFactory) -> None:
    """Make a controller selectable by name from scenario files and the CLI."""
    CONTROLLERS.register(name, factory)


register_controller("none", NoController)
register_controller("baseline", BaselineController)


class ManagingAdapter:
    """Feeds diagnostics to a controller and submits its commands."""

    node_id = "managing"

    def __init__(self, controller: ManagingSystem, registry: NodeRegistry, bus: Bus):
        self.controller = controller
        self.registry = registry
        self.bus = bus
        self.issued: list[AdaptationCommand] = []
        bus.subscribe(self.node_id, DIAGNOSTICS_TOPIC, self.on_diagnostics)

    def on_diagnostics(self, msg: Message) -> None:
        snapshot: DiagnosticsSnapshot = msg.payload
        for cmd in self.controller.step(snapshot):
            cmd = replace(cmd, issued_at=self.bus.now, issuer=self.controller.name)
            logger.debug(f"{cmd.issuer} -> {action_name(cmd.action)} on {cmd.target}")
            self.issued.append(cmd)
            self.registry.submit(cmd)


def load_plugin(spec: str) -> None:
    """
    Import ``module`` or ``module:attr``. Importing is expected to register
    controllers; a ``ManagingSystem`` subclass named by ``attr`` is registered
    under its ``name`` if that name is still free.
    """
    module_name, _, attr = spec.partition(":")
    module = importlib.import_module(module_name)
    if not attr:
        return
    obj = getattr(module, attr)
    if inspect.isclass(obj) and issubclass(obj, ManagingSystem) and obj.name not in CONTROLLERS:
        register_controller(obj.name, obj)
