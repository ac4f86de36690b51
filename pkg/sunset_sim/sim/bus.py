# sim/bus.py
"""
Deterministic discrete-event publish/subscribe bus.

All events live in one heap ordered by (due time, insertion counter), so
events scheduled for the same millisecond always run in the order they were
scheduled. Handlers run synchronously; anything they schedule goes back on
the heap.
"""

from __future__ import annotations

import bisect
import heapq
import itertools
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from ..errors import BusError, SimulationError
from .clock import VirtualClock, format_time, to_ms
from .eventlog import EventLog

logger = logging.getLogger(__name__)

TIMER_FIRE = "timer_fire"
MESSAGE_DELIVERY = "message_delivery"
INJECTION = "injection"
ADAPTATION_DELIVERY = "adaptation_delivery"


@dataclass(frozen=True)
class Message:
    topic: str
    stamp: int
    seq: int
    publisher: str
    payload: Any


@dataclass(order=True)
class ScheduledEvent:
    due: int
    counter: int
    kind: str = field(compare=False)
    origin: str = field(compare=False)
    action: Callable[[], None] = field(compare=False, repr=False)
    cancelled: bool = field(default=False, compare=False)

    def cancel(self) -> None:
        self.cancelled = True


class Subscription:
    """Handle returned by ``Bus.subscribe``; ``destroy()`` stops delivery."""

    def __init__(self, bus: "Bus", node: str, topic: str, handler: Callable[[Message], None]):
        self._bus = bus
        self.node = node
        self.topic = topic
        self.handler = handler
        self.alive = True

    def destroy(self) -> None:
        if self.alive:
            self.alive = False
            self._bus._forget(self)

    def __repr__(self) -> str:
        return f"Subscription({self.node} <- {self.topic}, alive={self.alive})"


class Timer:
    """Periodic grid-aligned timer. Fires at every multiple of the period."""

    def __init__(self, bus: "Bus", node: str, period_ms: int, callback: Callable[[], None]):
        if period_ms <= 0:
            raise BusError("timer period must be positive")
        self._bus = bus
        self.node = node
        self.period_ms = period_ms
        self._callback = callback
        self._pending: Optional[ScheduledEvent] = None
        self.active = True
        self._arm(bus.clock.now)

    def _arm(self, after: int) -> None:
        due = (after // self.period_ms + 1) * self.period_ms
        self._pending = self._bus.schedule(due, TIMER_FIRE, self.node, self._fire)

    def _fire(self) -> None:
        if not self.active:
            return
        self._arm(self._bus.clock.now)
        self._callback()

    def cancel(self) -> None:
        self.active = False
        if self._pending is not None:
            self._pending.cancel()


class Bus:
    """
    Single-threaded event loop plus topic routing.

    ``is_active`` is a callback answering whether a node may publish right now;
    the node registry installs it so the bus itself stays unaware of
    lifecycle states.
    """

    def __init__(
        self,
        log: Optional[EventLog] = None,
        latency_s: Optional[dict[str, float]] = None,
        is_active: Optional[Callable[[str], bool]] = None,
    ):
        self.clock = VirtualClock()
        self.log = log if log is not None else EventLog()
        self._latency_ms = {t: to_ms(v) for t, v in (latency_s or {}).items()}
        self.is_active: Callable[[str], bool] = is_active or (lambda node: True)

        self._heap: list[ScheduledEvent] = []
        self._counter = itertools.count()
        self._subs: dict[str, list[Subscription]] = defaultdict(list)
        self._seq: dict[tuple[str, str], int] = defaultdict(int)
        self._arrivals: dict[str, list[int]] = defaultdict(list)
        self.executed: Counter[str] = Counter()

    # ── Scheduling ────────────────────────────────────────────────────────────
    def schedule(self, due: int, kind: str, origin: str, action: Callable[[], None]) -> ScheduledEvent:
        if due < self.clock.now:
            raise BusError(f"cannot schedule in the past ({format_time(due)} < {format_time(self.clock.now)})")
        ev = ScheduledEvent(due=due, counter=next(self._counter), kind=kind, origin=origin, action=action)
        heapq.heappush(self._heap, ev)
        return ev

    def schedule_in(self, delay_s: float, kind: str, origin: str, action: Callable[[], None]) -> ScheduledEvent:
        return self.schedule(self.clock.now + to_ms(delay_s), kind, origin, action)

    def create_timer(self, node: str, period_s: float, callback: Callable[[], None]) -> Timer:
        return Timer(self, node, to_ms(period_s), callback)

    @property
    def now(self) -> int:
        return self.clock.now

    # ── Pub/sub ───────────────────────────────────────────────────────────────
    def subscribe(self, node: str, topic: str, handler: Callable[[Message], None]) -> Subscription:
        if not topic:
            raise BusError("topic name must be non-empty")
        if any(s.node == node for s in self._subs[topic]):
            raise BusError(f"already subscribed: {node} -> {topic}")
        sub = Subscription(self, node, topic, handler)
        self._subs[topic].append(sub)
        logger.debug(f"{node} subscribed to {topic}")
        return sub

    def _forget(self, sub: Subscription) -> None:
        subs = self._subs.get(sub.topic, [])
        if sub in subs:
            subs.remove(sub)
        logger.debug(f"{sub.node} unsubscribed from {sub.topic}")

    def subscribers(self, topic: str) -> list[str]:
        return [s.node for s in self._subs.get(topic, [])]

    def publish(self, node: str, topic: str, payload: Any, stamp: Optional[int] = None) -> Optional[int]:
        """Publish ``payload``; returns the sequence number or None if dropped."""
        now = self.clock.now
        if not self.is_active(node):
            self.log.append(now, "dropped", node, topic=topic, reason="inactive publisher")
            return None

        self._seq[(node, topic)] += 1
        seq = self._seq[(node, topic)]
        msg = Message(topic=topic, stamp=now if stamp is None else stamp, seq=seq, publisher=node, payload=payload)

        detail_fn = getattr(payload, "log_detail", None)
        detail = detail_fn() if callable(detail_fn) else {}
        self.log.append(now, "publish", node, topic=topic, seq=seq, stamp=format_time(msg.stamp), **detail)

        arrival = now + self._latency_ms.get(topic, 0)
        self._arrivals[topic].append(arrival)
        for sub in list(self._subs.get(topic, [])):
            self.schedule(arrival, MESSAGE_DELIVERY, node, self._deliverer(sub, msg))
        return seq

    @staticmethod
    def _deliverer(sub: Subscription, msg: Message) -> Callable[[], None]:
        def deliver() -> None:
            if sub.alive:
                sub.handler(msg)
        return deliver

    def estimate_frequency(self, topic: str, window_s: float, now: Optional[int] = None) -> float:
        """Messages arriving in (now - window, now], divided by the window."""
        if window_s <= 0:
            raise BusError("window must be > 0")
        now = self.clock.now if now is None else now
        arrivals = self._arrivals.get(topic, [])
        lo = bisect.bisect_right(arrivals, now - to_ms(window_s))
        hi = bisect.bisect_right(arrivals, now)
        return (hi - lo) / window_s

    # ── Loop ──────────────────────────────────────────────────────────────────
    def run_until(self, t_end: int) -> int:
        """Execute every event due at or before ``t_end`` (ms); returns the count."""
        if t_end < self.clock.now:
            raise BusError("t_end is before the current time")
        count = 0
        while self._heap and self._heap[0].due <= t_end:
            ev = heapq.heappop(self._heap)
            if ev.cancelled:
                continue
            self.clock.advance_to(ev.due)
            try:
                ev.action()
            except Exception as e:
                logger.error(f"Handler fault at t={format_time(ev.due)} ({ev.kind} from {ev.origin}): {e}")
                raise SimulationError(
                    f"{ev.kind} from {ev.origin} failed at t={format_time(ev.due)}: {e}"
                ) from e
            self.executed[ev.kind] += 1
            count += 1
        self.clock.advance_to(t_end)
        return count
