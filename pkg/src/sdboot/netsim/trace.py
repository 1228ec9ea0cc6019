"""Per-node event traces with a deterministic serialised form.

Two runs with the same seed must produce byte-identical trace files, so
serialisation sorts keys and formats times with a fixed precision.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Iterable

if TYPE_CHECKING:
    from sdboot.netsim.clock import Clock


@dataclass(frozen=True)
class TraceEvent:
    time: float
    node: str
    kind: str
    detail: dict[str, Any]

    def to_json(self) -> str:
        record = {
            "time": f"{self.time:.6f}",
            "node": self.node,
            "kind": self.kind,
            "detail": self.detail,
        }
        return json.dumps(record, sort_keys=True, separators=(",", ":"))


class TraceLog:
    def __init__(self, clock: "Clock", node_name: str):
        self._clock = clock
        self._node = node_name
        self.events: list[TraceEvent] = []

    def record(self, kind: str, **detail: Any) -> TraceEvent:
        event = TraceEvent(self._clock.now, self._node, kind, detail)
        self.events.append(event)
        return event

    def of_kind(self, kind: str) -> list[TraceEvent]:
        return [e for e in self.events if e.kind == kind]

    def dump(self) -> str:
        return "\n".join(e.to_json() for e in self.events) + ("\n" if self.events else "")

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dump())


def merge_dump(logs: Iterable[TraceLog]) -> str:
    """Stable merged view of several node traces, ordered by time then by
    node name then intra-node order. Used for whole-run comparisons."""
    indexed = []
    for log in logs:
        for i, event in enumerate(log.events):
            indexed.append((event.time, event.node, i, event))
    indexed.sort(key=lambda item: (item[0], item[1], item[2]))
    lines = [event.to_json() for _, _, _, event in indexed]
    return "\n".join(lines) + ("\n" if lines else "")
