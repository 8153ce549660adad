"""Local run/span audit log with JSONL export.

Export schema, one JSON object per line. All run lines come first, in start
order, followed by all span lines in record order::

    {"type": "run", "run_id", "workflow", "status", "started", "finished", "span_count"}
    {"type": "span", "run_id", "span_id", "parent_span_id", "kind", "name",
     "started", "finished", "attributes", "error"}

Timestamps are ISO-8601 UTC strings with microsecond precision; ``finished``
is ``null`` while a run or span is still open.
"""

from __future__ import annotations

import contextlib
import contextvars
import json
import os
import threading
import time
from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Protocol

from .errors import DuplicateRun, RunAlreadyFinished, TraceError

SPAN_KINDS = ("graph_node", "crew_task", "llm_call", "tool_call", "retrieval")
RUN_STATUSES = ("running", "ok", "failed")


class Clock(Protocol):
    def now(self) -> float: ...


class SystemClock:
    def now(self) -> float:
        return time.time()


class TickClock:
    """Deterministic clock: every read advances by ``step_us`` microseconds."""

    def __init__(self, start: float = 1_704_067_200.0, step_us: int = 1000):
        self._start_us = int(round(start * 1_000_000))
        self._step_us = step_us
        self._ticks = 0
        self._lock = threading.Lock()

    def now(self) -> float:
        with self._lock:
            value = self._start_us + self._ticks * self._step_us
            self._ticks += 1
        return value / 1_000_000


def isoformat(ts: float | None) -> str | None:
    if ts is None:
        return None
    return datetime.fromtimestamp(ts, timezone.utc).isoformat(timespec="microseconds")


@dataclass
class Span:
    span_id: str
    run_id: str
    kind: str
    name: str
    started: float
    finished: float | None = None
    parent_span_id: str | None = None
    attributes: dict[str, str] = field(default_factory=dict)
    error: str | None = None

    def to_json(self) -> dict[str, Any]:
        return {
            "type": "span",
            "run_id": self.run_id,
            "span_id": self.span_id,
            "parent_span_id": self.parent_span_id,
            "kind": self.kind,
            "name": self.name,
            "started": isoformat(self.started),
            "finished": isoformat(self.finished),
            "attributes": dict(sorted(self.attributes.items())),
            "error": self.error,
        }


@dataclass
class RunTrace:
    run_id: str
    workflow: str
    started: float
    finished: float | None = None
    status: str = "running"
    spans: list[Span] = field(default_factory=list)
    sink: TraceSink | None = field(default=None, repr=False, compare=False)

    def to_json(self) -> dict[str, Any]:
        return {
            "type": "run",
            "run_id": self.run_id,
            "workflow": self.workflow,
            "status": self.status,
            "started": isoformat(self.started),
            "finished": isoformat(self.finished),
            "span_count": len(self.spans),
        }

    def spans_of(self, kind: str) -> list[Span]:
        return [s for s in self.spans if s.kind == kind]


class TraceSink:
    def __init__(self, clock: Clock | None = None):
        self.clock = clock or SystemClock()
        self.runs: dict[str, RunTrace] = {}
        self._lock = threading.Lock()

    def start_run(self, workflow: str, run_id: str) -> RunTrace:
        with self._lock:
            if run_id in self.runs:
                raise DuplicateRun(f"run {run_id!r} already exists in this sink")
            handle = RunTrace(run_id, workflow, self.clock.now(), sink=self)
            self.runs[run_id] = handle
        return handle

    def record_span(self, handle: RunTrace, span: Span) -> None:
        if span.kind not in SPAN_KINDS:
            raise TraceError(f"unknown span kind {span.kind!r}")
        with self._lock:
            if handle.status != "running":
                raise RunAlreadyFinished(f"run {handle.run_id!r} is already {handle.status}")
            if span.parent_span_id is not None and not any(s.span_id == span.parent_span_id for s in handle.spans):
                raise TraceError(f"parent span {span.parent_span_id!r} is not recorded in run {handle.run_id!r}")
            span.run_id = handle.run_id
            handle.spans.append(span)

    def finish_run(self, handle: RunTrace, status: str) -> None:
        if status not in ("ok", "failed"):
            raise TraceError(f"invalid final status {status!r}")
        with self._lock:
            if handle.status != "running":
                raise RunAlreadyFinished(f"run {handle.run_id!r} is already {handle.status}")
            handle.finished = self.clock.now()
            handle.status = status

    def lines(self) -> list[str]:
        runs = list(self.runs.values())
        out = [json.dumps(r.to_json(), ensure_ascii=False) for r in runs]
        for run in runs:
            out.extend(json.dumps(s.to_json(), ensure_ascii=False) for s in run.spans)
        return out

    def export_jsonl(self, path: str | os.PathLike) -> None:
        text = "".join(line + "\n" for line in self.lines())
        try:
            Path(path).write_text(text, encoding="utf-8")
        except OSError as exc:
            raise TraceError(f"cannot write trace to {path}: {exc}") from exc


# --- ambient tracing ------------------------------------------------------------------

_active: contextvars.ContextVar[tuple[RunTrace, str | None] | None] = contextvars.ContextVar(
    "crewgraph_active_trace", default=None
)


def current_run() -> RunTrace | None:
    active = _active.get()
    return active[0] if active else None


@contextlib.contextmanager
def activate(handle: RunTrace) -> Iterator[RunTrace]:
    token = _active.set((handle, None))
    try:
        yield handle
    finally:
        _active.reset(token)


@contextlib.contextmanager
def span(kind: str, name: str, attributes: Mapping[str, Any] | None = None) -> Iterator[Span | None]:
    """Record a span on the active run, nested under the enclosing span.

    Without an active run this is a no-op that yields ``None``.
    """
    active = _active.get()
    if active is None:
        yield None
        return
    handle, parent = active
    sink = handle.sink
    assert sink is not None
    attrs = {k: str(v) for k, v in (attributes or {}).items()}
    s = Span(
        span_id=f"s{len(handle.spans) + 1:04d}",
        run_id=handle.run_id,
        kind=kind,
        name=name,
        started=sink.clock.now(),
        parent_span_id=parent,
        attributes=attrs,
    )
    sink.record_span(handle, s)
    token = _active.set((handle, s.span_id))
    try:
        yield s
    except BaseException as exc:
        if s.error is None:
            s.error = f"{type(exc).__name__}: {exc}"
        raise
    finally:
        _active.reset(token)
        s.finished = sink.clock.now()
