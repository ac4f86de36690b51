# sim/lifecycle.py
"""
Lifecycle-managed nodes and the registry that adapts them.

Every node of the managed system derives from ``LifecycleNode`` and so
responds to the same adaptation endpoints: reparametrisation, change of
subscription, (de-)activation, restart and redeploy. ``NodeRegistry`` owns
the nodes, gates publishing on the ACTIVE state and turns adaptation
commands into transitions.
"""

from __future__ import annotations

import logging
from abc import ABC
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Any, Callable, Optional, Union

from ..errors import LifecycleError
from ..logging_setup import log_sim_event
from .bus import ADAPTATION_DELIVERY, Bus, Message, Subscription, Timer
from .clock import format_time

if TYPE_CHECKING:
    from ..config import SimulationSettings

logger = logging.getLogger(__name__)

TOPICS = (
    "/camera/image",
    "/depth/image",
    "/enhancement/image",
    "/fusion/output",
    "/segmentation/output",
    "/diagnostics",
)


class LifecycleState(str, Enum):
    UNCONFIGURED = "UNCONFIGURED"
    INACTIVE = "INACTIVE"
    ACTIVE = "ACTIVE"
    FINALIZED = "FINALIZED"


# ── Adaptation actions ────────────────────────────────────────────────────────
@dataclass(frozen=True)
class SetParameter:
    name: str
    value: Any


@dataclass(frozen=True)
class ChangeSubscription:
    from_topic: str
    to_topic: str


@dataclass(frozen=True)
class Activate:
    pass


@dataclass(frozen=True)
class Deactivate:
    pass


@dataclass(frozen=True)
class Restart:
    pass


@dataclass(frozen=True)
class Redeploy:
    pass


Action = Union[SetParameter, ChangeSubscription, Activate, Deactivate, Restart, Redeploy]
ACTION_TYPES: dict[str, type] = {
    cls.__name__: cls for cls in (SetParameter, ChangeSubscription, Activate, Deactivate, Restart, Redeploy)
}


def action_name(action: Action) -> str:
    return type(action).__name__


def action_args(action: Action) -> dict[str, Any]:
    return asdict(action)


def action_from_dict(name: str, args: Optional[dict[str, Any]] = None) -> Action:
    try:
        cls = ACTION_TYPES[name]
    except KeyError:
        raise LifecycleError(f"unknown action {name!r}") from None
    return cls(**(args or {}))


@dataclass(frozen=True)
class AdaptationCommand:
    target: str
    action: Action
    issued_at: int = 0
    issuer: str = "unknown"


@dataclass(frozen=True)
class AdaptationOutcome:
    accepted: bool
    reason: str = ""

    @classmethod
    def ok(cls, reason: str = "") -> "AdaptationOutcome":
        return cls(True, reason)

    @classmethod
    def rejected(cls, reason: str) -> "AdaptationOutcome":
        return cls(False, reason)


# ── Faults and shared environment ─────────────────────────────────────────────
OUTAGE = "outage"
DEFOCUS = "defocus"


@dataclass
class FaultRegister:
    """Transient faults clear on configure; persistent ones only on redeploy."""
    transient: set[str] = field(default_factory=set)
    persistent: set[str] = field(default_factory=set)

    def add(self, fault_id: str, persistent: bool) -> None:
        (self.persistent if persistent else self.transient).add(fault_id)

    def has(self, fault_id: str) -> bool:
        return fault_id in self.transient or fault_id in self.persistent

    def clear_transient(self) -> None:
        self.transient.clear()


@dataclass
class Environment:
    """External degradations. They outlive every node."""
    color_shift: float = 0.0
    depth_noise_sigma: float = 0.0
    misalignment: tuple[int, int] = (0, 0)


@dataclass
class NodeContext:
    bus: Bus
    env: Environment
    settings: "SimulationSettings"
    registry: "NodeRegistry"
    node_id: str = ""
    seed: int = 0


# ── Node base class ───────────────────────────────────────────────────────────
class LifecycleNode(ABC):
    """
    Common base of every managed node.

    Subclasses declare ``PARAMETERS`` (names of attributes reachable through
    SetParameter) and wire their default subscriptions in ``__init__`` with
    ``self.subscribe``. Handlers and timer callbacks should return early
    unless ``self.active``.
    """

    node_id: str = ""
    PARAMETERS: tuple[str, ...] = ()

    def __init__(self, ctx: NodeContext):
        self.ctx = ctx
        self.node_id = ctx.node_id or type(self).node_id
        self.bus = ctx.bus
        self.state = LifecycleState.UNCONFIGURED
        self.faults = FaultRegister()
        self._subs: dict[str, Subscription] = {}
        self._handlers: dict[str, Callable[[Message], None]] = {}
        self._timers: list[Timer] = []

    # ── Wiring helpers ────────────────────────────────────────────────────────
    @property
    def active(self) -> bool:
        return self.state is LifecycleState.ACTIVE

    @property
    def subscriptions(self) -> list[str]:
        return sorted(self._subs)

    def subscribe(self, topic: str, handler: Callable[[Message], None]) -> None:
        self._subs[topic] = self.bus.subscribe(self.node_id, topic, handler)
        self._handlers[topic] = handler

    def create_timer(self, period_s: float, callback: Callable[[], None]) -> Timer:
        timer = self.bus.create_timer(self.node_id, period_s, callback)
        self._timers.append(timer)
        return timer

    def publish(self, topic: str, payload: Any, stamp: Optional[int] = None) -> Optional[int]:
        return self.bus.publish(self.node_id, topic, payload, stamp=stamp)

    def log(self, kind: str, topic: Optional[str] = None, **detail: Any) -> None:
        """Event-log record from this node; ``topic`` goes to the record's topic field."""
        self.bus.log.append(self.bus.now, kind, self.node_id, topic=topic, **detail)

    # ── Transitions ───────────────────────────────────────────────────────────
    def _transition(self, expected: tuple[LifecycleState, ...], target: LifecycleState) -> None:
        if self.state not in expected:
            raise LifecycleError("illegal transition")
        previous = self.state
        self.state = target
        self.log("transition", **{"from": previous.value, "to": target.value})

    def configure(self) -> None:
        self._transition((LifecycleState.UNCONFIGURED,), LifecycleState.INACTIVE)
        self.faults.clear_transient()
        self.on_configure()

    def activate(self) -> None:
        self._transition((LifecycleState.INACTIVE,), LifecycleState.ACTIVE)
        self.on_activate()

    def deactivate(self) -> None:
        self._transition((LifecycleState.ACTIVE,), LifecycleState.INACTIVE)
        self.on_deactivate()

    def cleanup(self) -> None:
        self._transition((LifecycleState.INACTIVE,), LifecycleState.UNCONFIGURED)
        self.on_cleanup()

    def shutdown(self) -> None:
        self._transition(
            (LifecycleState.UNCONFIGURED, LifecycleState.INACTIVE, LifecycleState.ACTIVE),
            LifecycleState.FINALIZED,
        )
        for sub in self._subs.values():
            sub.destroy()
        self._subs.clear()
        for timer in self._timers:
            timer.cancel()
        self._timers.clear()

    def on_configure(self) -> None:
        pass

    def on_activate(self) -> None:
        pass

    def on_deactivate(self) -> None:
        pass

    def on_cleanup(self) -> None:
        pass

    # ── Adaptation endpoints ──────────────────────────────────────────────────
    def parameters(self) -> dict[str, Any]:
        return {name: getattr(self, name) for name in self.PARAMETERS}

    def coerce_parameter(self, name: str, value: Any) -> Any:
        """Validate/convert a new value; raise LifecycleError to reject it."""
        return value

    def on_parameter_changed(self, name: str, value: Any) -> None:
        pass

    def set_parameter(self, name: str, value: Any) -> None:
        if name not in self.PARAMETERS:
            raise LifecycleError("unknown parameter")
        value = self.coerce_parameter(name, value)
        setattr(self, name, value)
        self.on_parameter_changed(name, value)

    def change_subscription(self, from_topic: str, to_topic: str) -> None:
        if to_topic not in TOPICS or from_topic not in TOPICS:
            raise LifecycleError("unknown topic")
        if from_topic not in self._subs:
            raise LifecycleError("not subscribed")
        if to_topic in self._subs:
            raise LifecycleError("already subscribed")
        handler = self._handlers.pop(from_topic)
        self._subs.pop(from_topic).destroy()
        self.subscribe(to_topic, handler)


NodeFactory = Callable[[NodeContext], LifecycleNode]


# ── Registry ──────────────────────────────────────────────────────────────────
class NodeRegistry:
    """Hosts all nodes and applies adaptation commands on the event loop."""

    def __init__(self, bus: Bus, env: Environment, settings: "SimulationSettings", seed: int = 0):
        self.bus = bus
        self.env = env
        self.settings = settings
        self.seed = seed
        self._nodes: dict[str, LifecycleNode] = {}
        self._factories: dict[str, NodeFactory] = {}
        self._redeploying: set[str] = set()
        self._restarting: set[str] = set()
        self._queued: dict[str, list[AdaptationCommand]] = {}
        self.outcomes: list[tuple[AdaptationCommand, AdaptationOutcome]] = []
        bus.is_active = self.is_active

    def _context(self, node_id: str) -> NodeContext:
        return NodeContext(bus=self.bus, env=self.env, settings=self.settings, registry=self,
                           node_id=node_id, seed=self.seed)

    def register(self, node_id: str, factory: NodeFactory, autostart: bool = True) -> LifecycleNode:
        """Create a node; configure it, and activate it when ``autostart``."""
        if node_id in self._nodes:
            raise LifecycleError(f"node {node_id!r} already registered")
        self._factories[node_id] = factory
        node = self._spawn(node_id)
        if autostart:
            node.activate()
        return node

    def _spawn(self, node_id: str) -> LifecycleNode:
        node = self._factories[node_id](self._context(node_id))
        self._nodes[node_id] = node
        node.configure()
        return node

    def get(self, node_id: str) -> LifecycleNode:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise LifecycleError(f"unknown node {node_id!r}") from None

    def __contains__(self, node_id: str) -> bool:
        return node_id in self._nodes

    @property
    def node_ids(self) -> list[str]:
        return list(self._nodes)

    def is_active(self, node_id: str) -> bool:
        node = self._nodes.get(node_id)
        return node is not None and node.active

    def is_redeploying(self, node_id: str) -> bool:
        return node_id in self._redeploying

    def states(self) -> dict[str, LifecycleState]:
        return {nid: node.state for nid, node in self._nodes.items()}

    def redeploy_delay(self, node_id: str) -> float:
        return self.settings.delays.redeploy_for(node_id)

    # ── Command intake ────────────────────────────────────────────────────────
    def submit(self, cmd: AdaptationCommand) -> None:
        """Enqueue a command as an adaptation_delivery event at the current time."""
        self.bus.schedule(self.bus.now, ADAPTATION_DELIVERY, cmd.issuer, lambda: self.apply_adaptation(cmd))

    def apply_adaptation(self, cmd: AdaptationCommand) -> AdaptationOutcome:
        if cmd.target not in self._nodes:
            outcome = AdaptationOutcome.rejected("unknown node")
        elif cmd.target in self._redeploying:
            if isinstance(cmd.action, Redeploy):
                outcome = AdaptationOutcome.rejected("already redeploying")
            else:
                self._queued.setdefault(cmd.target, []).append(cmd)
                self.bus.log.append(self.bus.now, "adaptation_queued", cmd.target,
                                    action=action_name(cmd.action), issuer=cmd.issuer)
                return AdaptationOutcome.ok("queued")
        else:
            try:
                self._dispatch(cmd)
                outcome = AdaptationOutcome.ok()
            except LifecycleError as e:
                outcome = AdaptationOutcome.rejected(str(e))

        self.outcomes.append((cmd, outcome))
        self.bus.log.append(
            self.bus.now, "adaptation", cmd.target,
            action=action_name(cmd.action), args=action_args(cmd.action),
            issuer=cmd.issuer, issued_at=format_time(cmd.issued_at),
            accepted=outcome.accepted, reason=outcome.reason,
        )
        log_sim_event("adaptation", target=cmd.target, command=action_name(cmd.action),
                      issuer=cmd.issuer, accepted=outcome.accepted, reason=outcome.reason,
                      t=format_time(self.bus.now))
        if not outcome.accepted:
            logger.debug(f"{action_name(cmd.action)} on {cmd.target} rejected: {outcome.reason}")
        return outcome

    def _dispatch(self, cmd: AdaptationCommand) -> None:
        node = self._nodes[cmd.target]
        action = cmd.action
        if node.state is LifecycleState.FINALIZED:
            raise LifecycleError("illegal transition")
        if isinstance(action, SetParameter):
            node.set_parameter(action.name, action.value)
        elif isinstance(action, ChangeSubscription):
            node.change_subscription(action.from_topic, action.to_topic)
        elif isinstance(action, Activate):
            if node.state is LifecycleState.UNCONFIGURED:
                node.configure()
            node.activate()
        elif isinstance(action, Deactivate):
            if node.state is LifecycleState.ACTIVE:
                node.deactivate()
            node.cleanup()
        elif isinstance(action, Restart):
            self._begin_restart(cmd.target)
        elif isinstance(action, Redeploy):
            self._begin_redeploy(cmd.target)
        else:
            raise LifecycleError(f"unsupported action {action!r}")

    # ── Restart / redeploy ────────────────────────────────────────────────────
    def restart(self, node_id: str) -> AdaptationOutcome:
        return self.apply_adaptation(AdaptationCommand(node_id, Restart(), self.bus.now, "registry"))

    def redeploy(self, node_id: str) -> AdaptationOutcome:
        return self.apply_adaptation(AdaptationCommand(node_id, Redeploy(), self.bus.now, "registry"))

    def _begin_restart(self, node_id: str) -> None:
        node = self._nodes[node_id]
        if node.state not in (LifecycleState.ACTIVE, LifecycleState.INACTIVE) or node_id in self._restarting:
            raise LifecycleError("illegal transition")
        if node.state is LifecycleState.ACTIVE:
            node.deactivate()
        node.cleanup()
        self._restarting.add(node_id)

        def complete() -> None:
            self._restarting.discard(node_id)
            current = self._nodes.get(node_id)
            if current is not node or node.state is not LifecycleState.UNCONFIGURED:
                logger.debug(f"restart of {node_id} superseded")
                return
            node.configure()
            node.activate()
            node.log("restart_complete")

        self.bus.schedule_in(self.settings.delays.restart_s, ADAPTATION_DELIVERY, node_id, complete)

    def _begin_redeploy(self, node_id: str) -> None:
        node = self._nodes[node_id]
        node.shutdown()
        self._redeploying.add(node_id)
        self._restarting.discard(node_id)
        delay = self.redeploy_delay(node_id)
        logger.debug(f"redeploying {node_id}, back in {delay:.1f}s")

        def complete() -> None:
            fresh = self._spawn(node_id)
            fresh.activate()
            self._redeploying.discard(node_id)
            fresh.log("redeploy_complete")
            for queued in self._queued.pop(node_id, []):
                if not isinstance(queued.action, Redeploy):
                    self.apply_adaptation(queued)

        self.bus.schedule_in(delay, ADAPTATION_DELIVERY, node_id, complete)
