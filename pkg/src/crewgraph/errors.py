"""Exception hierarchy shared across the package."""

from __future__ import annotations

from typing import Any


class CrewGraphError(Exception):
    """Base class for every error raised by crewgraph."""


# --- graph building / compilation -------------------------------------------------


class GraphBuildError(CrewGraphError):
    pass


class DuplicateNode(GraphBuildError):
    def __init__(self, name: str):
        super().__init__(f"node {name!r} is already registered")
        self.name = name


class ReservedName(GraphBuildError):
    def __init__(self, name: str):
        super().__init__(f"{name!r} is reserved and cannot be registered as a node")
        self.name = name


class ConflictingEdge(GraphBuildError):
    def __init__(self, source: str):
        super().__init__(f"node {source!r} already has an out-routing")
        self.source = source


class EmptyTargets(GraphBuildError):
    def __init__(self, source: str):
        super().__init__(f"conditional edge from {source!r} has no targets")
        self.source = source


class InvalidChannel(GraphBuildError):
    pass


class CompileError(GraphBuildError):
    pass


class MissingEntry(CompileError):
    def __init__(self) -> None:
        super().__init__("graph has no entry node")


class UnknownNode(CompileError):
    def __init__(self, name: str):
        super().__init__(f"unknown node {name!r}")
        self.name = name


class UnreachableNode(CompileError):
    def __init__(self, name: str):
        super().__init__(f"node {name!r} is not reachable from the entry")
        self.name = name


class MissingOutRouting(CompileError):
    def __init__(self, name: str):
        super().__init__(f"node {name!r} has no outgoing edge (route it to END explicitly)")
        self.name = name


# --- graph execution ----------------------------------------------------------------


class GraphRunError(CrewGraphError):
    """A run aborted. ``state`` holds the state at the point of failure."""

    def __init__(self, message: str, *, state: Any = None, steps: list[str] | None = None):
        super().__init__(message)
        self.state = state
        self.steps = list(steps or [])


class StepBudgetExhausted(GraphRunError):
    pass


class RouterViolation(GraphRunError):
    pass


class HandlerWroteUndeclaredChannel(GraphRunError):
    pass


class UndeclaredChannel(GraphRunError):
    pass


class NodeFailed(GraphRunError):
    def __init__(self, node: str, cause: BaseException, **kw: Any):
        super().__init__(f"node {node!r} failed: {type(cause).__name__}: {cause}", **kw)
        self.node = node
        self.cause = cause


# --- checkpoints ---------------------------------------------------------------------


class CheckpointError(CrewGraphError):
    pass


class NotFound(CheckpointError):
    pass


class CorruptCheckpoint(CheckpointError):
    pass


class FingerprintMismatch(CheckpointError):
    pass


# --- model gateway -------------------------------------------------------------------


class GatewayError(CrewGraphError):
    pass


class ProviderError(GatewayError):
    def __init__(self, status: int | None, body: str):
        super().__init__(f"provider error (status={status}): {body[:500]}")
        self.status = status
        self.body = body


class ScriptExhausted(GatewayError):
    pass


class MalformedResponse(GatewayError):
    pass


class DimensionMismatch(CrewGraphError):
    pass


class UnknownTool(GatewayError):
    def __init__(self, name: str):
        super().__init__(f"unknown tool {name!r}")
        self.name = name


class ToolArgTypeMismatch(GatewayError):
    pass


# --- crew ---------------------------------------------------------------------------


class CrewError(CrewGraphError):
    pass


class InvalidCrew(CrewError):
    pass


class UnresolvedPlaceholder(CrewError):
    def __init__(self, name: str):
        super().__init__(f"unresolved placeholder {{{name}}}")
        self.name = name


class UnknownAgent(CrewError):
    def __init__(self, role: str):
        super().__init__(f"no agent with role {role!r}")
        self.role = role


class ToolLoopExhausted(CrewError):
    pass


class EmptyOutput(CrewError):
    pass


class DelegationExhausted(CrewError):
    pass


class CrewFailed(CrewError):
    def __init__(self, task_id: str, cause: BaseException):
        super().__init__(f"task {task_id!r} failed: {cause}")
        self.task_id = task_id
        self.cause = cause


class MissingInputChannel(CrewError):
    def __init__(self, channel: str):
        super().__init__(f"input channel {channel!r} is not set in the graph state")
        self.channel = channel


# --- vector store / trace / workflows --------------------------------------------------


class DuplicateId(CrewGraphError):
    pass


class CorruptIndex(CrewGraphError):
    pass


class TraceError(CrewGraphError):
    pass


class DuplicateRun(TraceError):
    pass


class RunAlreadyFinished(TraceError):
    pass


class UnknownCategory(CrewGraphError):
    pass


class ConfigError(CrewGraphError):
    pass
