"""Typed tool declarations shared by the gateway and the crew layer."""

from __future__ import annotations

from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

from .errors import ToolArgTypeMismatch

PARAM_TYPES = ("string", "number", "boolean")


@dataclass(frozen=True)
class ToolParam:
    name: str
    type: str = "string"
    required: bool = True
    description: str = ""

    def __post_init__(self) -> None:
        if self.type not in PARAM_TYPES:
            raise ValueError(f"parameter {self.name!r}: type must be one of {PARAM_TYPES}")


@dataclass(frozen=True)
class ToolSpec:
    name: str
    description: str
    parameters: tuple[ToolParam, ...] = ()
    executor: Callable[[Mapping[str, Any]], str] | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("tool name must be non-empty")
        object.__setattr__(self, "parameters", tuple(self.parameters))
        names = [p.name for p in self.parameters]
        if len(names) != len(set(names)):
            raise ValueError(f"tool {self.name!r} has duplicate parameter names")

    def schema(self) -> dict[str, Any]:
        """OpenAI-style function schema."""
        props = {}
        for p in self.parameters:
            props[p.name] = {"type": p.type}
            if p.description:
                props[p.name]["description"] = p.description
        return {
            "type": "function",
            "function": {
                "name": self.name,
                "description": self.description,
                "parameters": {
                    "type": "object",
                    "properties": props,
                    "required": [p.name for p in self.parameters if p.required],
                },
            },
        }

    def signature(self) -> str:
        params = ", ".join(f"{p.name}: {p.type}{'' if p.required else '?'}" for p in self.parameters)
        return f"{self.name}({params})"

    def validate_args(self, args: Mapping[str, Any]) -> None:
        known = {p.name: p for p in self.parameters}
        for key in args:
            if key not in known:
                raise ToolArgTypeMismatch(f"tool {self.name!r} has no parameter {key!r}")
        for p in self.parameters:
            if p.name not in args:
                if p.required:
                    raise ToolArgTypeMismatch(f"tool {self.name!r}: missing required argument {p.name!r}")
                continue
            if not _type_ok(p.type, args[p.name]):
                raise ToolArgTypeMismatch(
                    f"tool {self.name!r}: argument {p.name!r} should be {p.type}, "
                    f"got {type(args[p.name]).__name__}"
                )

    def run(self, args: Mapping[str, Any]) -> str:
        if self.executor is None:
            raise RuntimeError(f"tool {self.name!r} has no executor")
        return str(self.executor(args))


def _type_ok(kind: str, value: Any) -> bool:
    if kind == "string":
        return isinstance(value, str)
    if kind == "boolean":
        return isinstance(value, bool)
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def tool_index(tools: Sequence[ToolSpec]) -> dict[str, ToolSpec]:
    return {t.name: t for t in tools}
