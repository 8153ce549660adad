"""Graph state: named channels with per-channel merge policies."""

from __future__ import annotations

import base64
import copy
import json
import math
from collections.abc import Iterator, Mapping
from dataclasses import dataclass
from typing import Any, Union

from ..errors import HandlerWroteUndeclaredChannel, InvalidChannel, UndeclaredChannel

ChannelValue = Union[str, int, float, bool, list, bytes]

REPLACE = "replace"
APPEND_LIST = "append_list"
MERGE_POLICIES = (REPLACE, APPEND_LIST)


def value_kind(value: Any) -> str:
    """Classify a channel value; raises ``TypeError`` for unsupported values."""
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, (int, float)):
        if isinstance(value, float) and not math.isfinite(value):
            raise TypeError(f"non-finite number {value!r} is not a channel value")
        return "number"
    if isinstance(value, str):
        return "text"
    if isinstance(value, (bytes, bytearray)):
        return "blob"
    if isinstance(value, (list, tuple)) and all(isinstance(v, str) for v in value):
        return "text-list"
    raise TypeError(f"unsupported channel value of type {type(value).__name__}")


@dataclass(frozen=True)
class ChannelSpec:
    name: str
    merge_policy: str = REPLACE
    default: ChannelValue | None = None

    def __post_init__(self) -> None:
        if not self.name:
            raise InvalidChannel("channel name must be non-empty")
        if self.merge_policy not in MERGE_POLICIES:
            raise InvalidChannel(f"channel {self.name!r}: unknown merge policy {self.merge_policy!r}")
        if self.default is not None:
            try:
                kind = value_kind(self.default)
            except TypeError as exc:
                raise InvalidChannel(f"channel {self.name!r}: {exc}") from None
            if self.merge_policy == APPEND_LIST and kind != "text-list":
                raise InvalidChannel(f"channel {self.name!r}: append_list requires a text-list default")


class GraphState(Mapping):
    """An immutable mapping of channel name to value.

    Lists and blobs are copied on the way in and on ``copy()`` so handlers can
    never mutate the engine's view of the state.
    """

    __slots__ = ("_entries",)

    def __init__(self, entries: Mapping[str, ChannelValue] | None = None):
        data: dict[str, ChannelValue] = {}
        for name, value in (entries or {}).items():
            if not isinstance(name, str) or not name:
                raise InvalidChannel(f"invalid channel name {name!r}")
            try:
                kind = value_kind(value)
            except TypeError as exc:
                raise InvalidChannel(f"channel {name!r}: {exc}") from None
            data[name] = _own(value, kind)
        self._entries = data

    def __getitem__(self, key: str) -> ChannelValue:
        value = self._entries[key]
        return list(value) if isinstance(value, list) else value

    def __iter__(self) -> Iterator[str]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, GraphState):
            return self._entries == other._entries
        if isinstance(other, Mapping):
            return self._entries == dict(other)
        return NotImplemented

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"GraphState({self._entries!r})"

    def copy(self) -> GraphState:
        return GraphState(copy.deepcopy(self._entries))

    def to_dict(self) -> dict[str, ChannelValue]:
        return copy.deepcopy(self._entries)

    def merge(self, delta: Mapping[str, Any], channels: Mapping[str, ChannelSpec]) -> GraphState:
        """Return a new state with ``delta`` applied under each channel's policy."""
        data = copy.deepcopy(self._entries)
        for name, value in delta.items():
            spec = channels.get(name)
            if spec is None:
                raise HandlerWroteUndeclaredChannel(f"write to undeclared channel {name!r}", state=self)
            if spec.merge_policy == APPEND_LIST:
                items = [value] if isinstance(value, str) else value
                if not isinstance(items, (list, tuple)) or not all(isinstance(v, str) for v in items):
                    raise InvalidChannel(f"append_list channel {name!r} accepts text or a list of text")
                data[name] = list(data.get(name) or []) + list(items)
            else:
                data[name] = value
        return GraphState(data)

    # canonical form: sorted keys, tagged values, compact separators
    def to_canonical(self) -> dict[str, list]:
        out = {}
        for name in sorted(self._entries):
            value = self._entries[name]
            kind = value_kind(value)
            if kind == "blob":
                value = base64.b64encode(value).decode("ascii")
            out[name] = [kind, value]
        return out

    @classmethod
    def from_canonical(cls, doc: Mapping[str, Any]) -> GraphState:
        entries: dict[str, ChannelValue] = {}
        for name, pair in doc.items():
            kind, value = pair
            if kind == "blob":
                value = base64.b64decode(value)
            elif kind not in ("text", "number", "boolean", "text-list"):
                raise ValueError(f"unknown channel kind {kind!r}")
            entries[name] = value
        return cls(entries)

    def to_bytes(self) -> bytes:
        return canonical_json(self.to_canonical())

    @classmethod
    def from_bytes(cls, data: bytes) -> GraphState:
        return cls.from_canonical(json.loads(data.decode("utf-8")))


def _own(value: Any, kind: str) -> ChannelValue:
    if kind == "text-list":
        return list(value)
    if kind == "blob":
        return bytes(value)
    return value


def canonical_json(doc: Any) -> bytes:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False).encode(
        "utf-8"
    )


def initial_state(initial: Mapping[str, Any] | None, channels: Mapping[str, ChannelSpec]) -> GraphState:
    """Fill channel defaults and reject channels the graph does not declare."""
    initial = dict(initial or {})
    for name in initial:
        if name not in channels:
            raise UndeclaredChannel(f"initial state uses undeclared channel {name!r}")
    data: dict[str, Any] = {}
    for name, spec in channels.items():
        if name in initial:
            data[name] = initial[name]
        elif spec.default is not None:
            data[name] = copy.deepcopy(spec.default)
    return GraphState(data)
