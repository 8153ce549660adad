"""Checkpoint persistence.

On-disk layout is ``<dir>/<run_id>/<step_index>.ckpt``. Each file is a
single header line followed by the canonical checkpoint body::

    {"body_sha256":"...","fingerprint":"...","format":"crewgraph-checkpoint","version":1}
    {"current_node":"...","meta":{...},"run_id":"...","state":{...},"step_index":3}

The header's digest covers the body bytes exactly, so any edit to the body
is reported as :class:`~crewgraph.errors.CorruptCheckpoint`.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Protocol

from ..errors import CorruptCheckpoint, NotFound
from .state import GraphState, canonical_json

FORMAT = "crewgraph-checkpoint"
VERSION = 1


@dataclass(frozen=True)
class Checkpoint:
    run_id: str
    step_index: int
    current_node: str
    state: GraphState
    graph_fingerprint: str
    # opaque extras callers want restored alongside the state (e.g. replay cursors)
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.step_index < 0:
            raise ValueError("step_index must be non-negative")


def encode_checkpoint(cp: Checkpoint) -> bytes:
    body = canonical_json(
        {
            "run_id": cp.run_id,
            "step_index": cp.step_index,
            "current_node": cp.current_node,
            "state": cp.state.to_canonical(),
            "meta": cp.meta,
        }
    )
    header = canonical_json(
        {
            "format": FORMAT,
            "version": VERSION,
            "fingerprint": cp.graph_fingerprint,
            "body_sha256": hashlib.sha256(body).hexdigest(),
        }
    )
    return header + b"\n" + body


def decode_checkpoint(data: bytes) -> Checkpoint:
    header_raw, sep, body = data.partition(b"\n")
    if not sep:
        raise CorruptCheckpoint("missing checkpoint header")
    try:
        header = json.loads(header_raw)
    except (ValueError, UnicodeDecodeError) as exc:
        raise CorruptCheckpoint(f"unreadable header: {exc}") from None
    if not isinstance(header, dict) or header.get("format") != FORMAT:
        raise CorruptCheckpoint("not a crewgraph checkpoint")
    if header.get("version") != VERSION:
        raise CorruptCheckpoint(f"unsupported checkpoint version {header.get('version')!r}")
    if hashlib.sha256(body).hexdigest() != header.get("body_sha256"):
        raise CorruptCheckpoint("checkpoint body does not match its digest")
    try:
        doc = json.loads(body)
        return Checkpoint(
            run_id=doc["run_id"],
            step_index=doc["step_index"],
            current_node=doc["current_node"],
            state=GraphState.from_canonical(doc["state"]),
            graph_fingerprint=header["fingerprint"],
            meta=doc.get("meta", {}),
        )
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptCheckpoint(f"malformed checkpoint body: {exc}") from None


class CheckpointStore(Protocol):
    def save(self, cp: Checkpoint) -> None: ...

    def load(self, run_id: str, step_index: int | None = None) -> Checkpoint: ...

    def steps(self, run_id: str) -> list[int]: ...


class MemoryCheckpointStore:
    """In-process store. Keeps encoded bytes so every save exercises serialization."""

    def __init__(self) -> None:
        self._data: dict[str, dict[int, bytes]] = {}
        self._lock = threading.Lock()

    def save(self, cp: Checkpoint) -> None:
        blob = encode_checkpoint(cp)
        with self._lock:
            self._data.setdefault(cp.run_id, {})[cp.step_index] = blob

    def steps(self, run_id: str) -> list[int]:
        return sorted(self._data.get(run_id, {}))

    def load(self, run_id: str, step_index: int | None = None) -> Checkpoint:
        runs = self._data.get(run_id)
        if not runs:
            raise NotFound(f"no checkpoint for run {run_id!r}")
        if step_index is None:
            step_index = max(runs)
        if step_index not in runs:
            raise NotFound(f"no checkpoint for run {run_id!r} at step {step_index}")
        return decode_checkpoint(runs[step_index])

    def raw(self, run_id: str, step_index: int) -> bytes:
        return self._data[run_id][step_index]

    def put_raw(self, run_id: str, step_index: int, data: bytes) -> None:
        self._data.setdefault(run_id, {})[step_index] = data


class FileCheckpointStore:
    def __init__(self, directory: str | os.PathLike):
        self.directory = Path(directory)
        self._locks: dict[str, threading.Lock] = {}
        self._guard = threading.Lock()

    def _lock_for(self, run_id: str) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault(run_id, threading.Lock())

    def path_for(self, run_id: str, step_index: int) -> Path:
        return self.directory / run_id / f"{step_index}.ckpt"

    def save(self, cp: Checkpoint) -> None:
        if not cp.run_id or "/" in cp.run_id or cp.run_id in (".", ".."):
            raise ValueError(f"run_id {cp.run_id!r} cannot be used as a directory name")
        target = self.path_for(cp.run_id, cp.step_index)
        blob = encode_checkpoint(cp)
        with self._lock_for(cp.run_id):
            target.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=target.parent, suffix=".tmp")
            try:
                with os.fdopen(fd, "wb") as fh:
                    fh.write(blob)
                os.replace(tmp, target)
            except BaseException:
                Path(tmp).unlink(missing_ok=True)
                raise

    def steps(self, run_id: str) -> list[int]:
        run_dir = self.directory / run_id
        if not run_dir.is_dir():
            return []
        found = []
        for path in run_dir.glob("*.ckpt"):
            if path.stem.isdigit():
                found.append(int(path.stem))
        return sorted(found)

    def load(self, run_id: str, step_index: int | None = None) -> Checkpoint:
        steps = self.steps(run_id)
        if not steps:
            raise NotFound(f"no checkpoint for run {run_id!r} in {self.directory}")
        if step_index is None:
            step_index = steps[-1]
        elif step_index not in steps:
            raise NotFound(f"no checkpoint for run {run_id!r} at step {step_index}")
        return decode_checkpoint(self.path_for(run_id, step_index).read_bytes())


def save_checkpoint(cp: Checkpoint, store: CheckpointStore) -> None:
    store.save(cp)


def load_checkpoint(run_id: str, store: CheckpointStore, step_index: int | None = None) -> Checkpoint:
    """Latest checkpoint for ``run_id`` unless a specific step is requested."""
    return store.load(run_id, step_index)
