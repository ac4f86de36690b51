# sim/clock.py
"""
Virtual clock with 1 ms fixed-point resolution.

Time only advances when the event loop moves it; all values are integer
milliseconds so downtime accounting never accumulates float drift.
"""

import logging

logger = logging.getLogger(__name__)

MS_PER_S = 1000


def to_ms(seconds: float) -> int:
    """Convert seconds to integer milliseconds (round half away from zero)."""
    scaled = seconds * MS_PER_S
    return int(scaled + 0.5) if scaled >= 0 else -int(-scaled + 0.5)


def format_time(ms: int) -> str:
    """Fixed-precision decimal string, e.g. 5100 -> '5.100'."""
    sign = "-" if ms < 0 else ""
    ms = abs(ms)
    return f"{sign}{ms // MS_PER_S}.{ms % MS_PER_S:03d}"


class VirtualClock:
    """
    Monotonic virtual time.

    Advanced only by the event loop; never moves backwards.
    """

    def __init__(self, start_ms: int = 0):
        self._now = start_ms

    @property
    def now(self) -> int:
        """Current virtual time in milliseconds."""
        return self._now

    def advance_to(self, t_ms: int) -> None:
        if t_ms < self._now:
            raise ValueError(f"virtual time cannot move backwards ({t_ms} < {self._now})")
        self._now = t_ms

    def reset(self) -> None:
        self._now = 0
        logger.debug("VirtualClock reset to 0")
