"""Deterministic discrete-event kernel.

Integer-second virtual clock, an event heap ordered by ``(at, seq)``, per-actor
seeded random streams and an append-only trace.

Random streams use Python's MT19937 (:class:`random.Random`). A per-actor
stream is seeded with the first 8 bytes (big endian) of
``sha256(f"{master_seed}:{actor_id}")``, so adding or reordering actors never
perturbs another actor's draws.
"""

from __future__ import annotations

import csv
import hashlib
import heapq
import io
import itertools
import json
import random
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Optional


class SchedulingError(Exception):
    """An event was scheduled before the current clock."""


class SimulationError(Exception):
    """A handler raised; carries the offending event."""

    def __init__(self, event: "Event", cause: BaseException):
        super().__init__(f"handler for {event.kind!r} at t={event.at} (seq {event.seq}) failed: {cause!r}")
        self.event = event
        self.cause = cause


@dataclass(frozen=True, order=True)
class Event:
    at: int
    seq: int
    kind: str = field(compare=False)
    payload: Any = field(compare=False, default=None)


class EventQueue:
    def __init__(self, now: int = 0):
        self._heap: list[Event] = []
        self._seq = itertools.count(1)
        self.now = now

    def __len__(self):
        return len(self._heap)

    def push(self, at: int, kind: str, payload: Any = None) -> Event:
        if not isinstance(at, int):
            raise TypeError(f"event time must be an integer second, got {at!r}")
        if at < self.now:
            raise SchedulingError(f"cannot schedule {kind!r} at {at}; clock is {self.now}")
        ev = Event(at, next(self._seq), kind, payload)
        heapq.heappush(self._heap, ev)
        return ev

    def peek(self) -> Optional[Event]:
        return self._heap[0] if self._heap else None

    def pop(self) -> Event:
        ev = heapq.heappop(self._heap)
        self.now = ev.at
        return ev


def schedule_event(queue: EventQueue, at: int, kind: str, payload: Any = None) -> Event:
    return queue.push(at, kind, payload)


@dataclass(frozen=True)
class TraceRecord:
    time: int
    actor: str
    kind: str
    resource: Optional[str] = None
    job: Optional[str] = None
    amount: Optional[int] = None
    detail: str = ""


TRACE_FIELDS = [f.name for f in fields(TraceRecord)]


class Trace:
    def __init__(self):
        self.records: list[TraceRecord] = []

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def append(self, record: TraceRecord) -> None:
        if self.records and record.time < self.records[-1].time:
            raise SchedulingError(f"trace time went backwards: {record.time} < {self.records[-1].time}")
        self.records.append(record)

    def of_kind(self, kind: str) -> list[TraceRecord]:
        return [r for r in self.records if r.kind == kind]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRACE_FIELDS)
        for r in self.records:
            writer.writerow(["" if v is None else v for v in (getattr(r, f) for f in TRACE_FIELDS)])
        return buf.getvalue()

    def to_jsonl(self) -> str:
        return "".join(json.dumps(asdict(r), separators=(",", ":")) + "\n" for r in self.records)

    def write(self, directory: str | Path) -> dict[str, Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = {"csv": directory / "trace.csv", "jsonl": directory / "trace.jsonl"}
        paths["csv"].write_text(self.to_csv(), encoding="utf-8", newline="")
        paths["jsonl"].write_text(self.to_jsonl(), encoding="utf-8", newline="")
        return paths


def seeded_rng(seed: int) -> random.Random:
    return random.Random(seed)


def actor_seed(master_seed: int, actor_id: str) -> int:
    digest = hashlib.sha256(f"{master_seed}:{actor_id}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def actor_rng(master_seed: int, actor_id: str) -> random.Random:
    return random.Random(actor_seed(master_seed, actor_id))


@dataclass(frozen=True)
class RunStats:
    processed: int
    clock: int


class Engine:
    """Single-threaded event loop. Handlers are registered per event kind."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.queue = EventQueue()
        self.trace = Trace()
        self.processed = 0
        self._handlers: dict[str, Callable[[Event], None]] = {}

    @property
    def now(self) -> int:
        return self.queue.now

    def on(self, kind: str, handler: Callable[[Event], None]) -> None:
        self._handlers[kind] = handler

    def schedule(self, at: int, kind: str, payload: Any = None) -> Event:
        if kind not in self._handlers:
            raise KeyError(f"no handler registered for {kind!r}")
        return self.queue.push(at, kind, payload)

    def rng(self, actor_id: str) -> random.Random:
        return actor_rng(self.seed, actor_id)

    def record(self, actor: str, kind: str, resource=None, job=None, amount=None, detail: str = "") -> TraceRecord:
        rec = TraceRecord(self.now, actor, kind, resource, job, amount, detail)
        self.trace.append(rec)
        return rec

    def _drain(self, stop: Optional[int]) -> int:
        processed = 0
        while self.queue.peek() is not None and (stop is None or self.queue.peek().at <= stop):
            ev = self.queue.pop()
            try:
                self._handlers[ev.kind](ev)
            except SimulationError:
                raise
            except Exception as exc:
                raise SimulationError(ev, exc) from exc
            processed += 1
        self.processed += processed
        return processed

    def run_until(self, stop: int) -> RunStats:
        if stop < self.now:
            raise SchedulingError(f"stop time {stop} is before the clock {self.now}")
        processed = self._drain(stop)
        self.queue.now = stop
        return RunStats(processed, stop)

    def run(self, stop: Optional[int] = None) -> RunStats:
        """Drain the queue (bounded by ``stop`` if given); the clock ends at the last event."""
        return RunStats(self._drain(stop), self.now)
