# sim/eventlog.py
"""
Append-only simulation event log.

One JSON object per line with a fixed field order:
    {"t": "5.100", "kind": ..., "node": ..., "topic": ..., "seq": ..., "detail": {...}}
``topic`` and ``seq`` are omitted when not applicable. Floats inside ``detail``
are rounded to a fixed number of decimals so two identical runs produce
byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, Optional

from .clock import format_time, to_ms

FLOAT_DECIMALS = 6


def _canonical(value: Any) -> Any:
    if isinstance(value, float):
        return round(value, FLOAT_DECIMALS)
    if isinstance(value, dict):
        return {str(k): _canonical(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_canonical(v) for v in value]
    if hasattr(value, "item"):  # numpy scalar
        return _canonical(value.item())
    return value


@dataclass(frozen=True)
class LogRecord:
    t: int
    kind: str
    node: str
    topic: Optional[str] = None
    seq: Optional[int] = None
    detail: dict = field(default_factory=dict)

    @property
    def seconds(self) -> float:
        return self.t / 1000.0

    def to_json(self) -> str:
        obj: dict[str, Any] = {"t": format_time(self.t), "kind": self.kind, "node": self.node}
        if self.topic is not None:
            obj["topic"] = self.topic
        if self.seq is not None:
            obj["seq"] = self.seq
        obj["detail"] = _canonical(self.detail)
        return json.dumps(obj, sort_keys=False, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "LogRecord":
        obj = json.loads(line)
        t_str = obj["t"]
        return cls(
            t=to_ms(float(t_str)),
            kind=obj["kind"],
            node=obj["node"],
            topic=obj.get("topic"),
            seq=obj.get("seq"),
            detail=obj.get("detail", {}),
        )


class EventLog:
    """In-memory append-only record list with JSONL (de)serialisation."""

    RUN_END = "run_end"

    def __init__(self, records: Optional[Iterable[LogRecord]] = None):
        self._records: list[LogRecord] = list(records or [])

    def append(self, t: int, kind: str, node: str, topic: Optional[str] = None,
               seq: Optional[int] = None, **detail: Any) -> LogRecord:
        rec = LogRecord(t=t, kind=kind, node=node, topic=topic, seq=seq, detail=_canonical(detail))
        self._records.append(rec)
        return rec

    def __iter__(self) -> Iterator[LogRecord]:
        return iter(self._records)

    def __len__(self) -> int:
        return len(self._records)

    def of_kind(self, *kinds: str) -> list[LogRecord]:
        return [r for r in self._records if r.kind in kinds]

    @property
    def complete(self) -> bool:
        return bool(self._records) and self._records[-1].kind == self.RUN_END

    @property
    def end_time(self) -> int:
        ends = self.of_kind(self.RUN_END)
        return ends[-1].t if ends else (self._records[-1].t if self._records else 0)

    def to_jsonl(self) -> str:
        return "".join(rec.to_json() + "\n" for rec in self._records)

    def write(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_jsonl(), encoding="utf-8")
        return path

    @classmethod
    def read(cls, path: Path) -> "EventLog":
        with Path(path).open("r", encoding="utf-8") as f:
            return cls(LogRecord.from_json(line) for line in f if line.strip())
