"""Sequential graph execution: invoke, stream, and resume from checkpoints."""

from __future__ import annotations

import contextlib
import uuid
from collections.abc import Callable, Iterator, Mapping
from dataclasses import dataclass, field
from typing import Any

from .. import trace as tracing
from ..errors import (
    FingerprintMismatch,
    GraphRunError,
    NodeFailed,
    RouterViolation,
    StepBudgetExhausted,
)
from .builder import END, CompiledGraph
from .checkpoint import Checkpoint, CheckpointStore
from .state import GraphState, initial_state


@dataclass(frozen=True)
class RunConfig:
    step_budget: int = 50
    run_id: str = field(default_factory=lambda: uuid.uuid4().hex)
    checkpoint_every: int | None = None

    def __post_init__(self) -> None:
        if self.step_budget < 1:
            raise ValueError("step_budget must be >= 1")
        if self.checkpoint_every is not None and self.checkpoint_every < 1:
            raise ValueError("checkpoint_every must be a positive integer")


@dataclass(frozen=True)
class StepRecord:
    index: int
    node: str
    next: str


@dataclass
class RunSummary:
    run_id: str
    steps: list[StepRecord] = field(default_factory=list)
    resumed_from: int | None = None

    @property
    def nodes(self) -> list[str]:
        return [s.node for s in self.steps]


def route(graph: CompiledGraph, node: str, state: GraphState) -> str:
    if node in graph.edges:
        return graph.edges[node].target
    cond = graph.conditional_edges[node]
    target = cond.router(state.copy())
    if target not in cond.targets:
        raise RouterViolation(
            f"router on {node!r} returned {target!r}, allowed: {sorted(cond.targets)}", state=state
        )
    return target


class _Execution:
    """One pass of the step loop, shared by invoke/stream/resume."""

    def __init__(
        self,
        graph: CompiledGraph,
        cfg: RunConfig,
        store: CheckpointStore | None,
        checkpoint_meta: Callable[[], Mapping[str, Any]] | None,
    ):
        if cfg.checkpoint_every is not None and store is None:
            raise ValueError("checkpoint_every is set but no checkpoint store was given")
        self.graph = graph
        self.cfg = cfg
        self.store = store
        self.checkpoint_meta = checkpoint_meta
        self.summary = RunSummary(cfg.run_id)
        self._last_saved: int | None = None

    def _save(self, step: int, node: str, state: GraphState) -> None:
        if self.store is None or self.cfg.checkpoint_every is None or self._last_saved == step:
            return
        meta = dict(self.checkpoint_meta()) if self.checkpoint_meta else {}
        self.store.save(Checkpoint(self.cfg.run_id, step, node, state, self.graph.fingerprint, meta))
        self._last_saved = step

    def steps(self, state: GraphState, node: str | None, step: int) -> Iterator[tuple[str, GraphState]]:
        """Run from ``node`` (or, if ``None``, stop immediately) until END or the budget."""
        graph, cfg = self.graph, self.cfg
        names = self.summary.nodes
        while node is not None:
            handler = graph.nodes[node]
            with tracing.span("graph_node", node, {"step": step + 1}) as sp:
                try:
                    delta = handler(state.copy())
                except GraphRunError:
                    raise
                except Exception as exc:
                    raise NodeFailed(node, exc, state=state, steps=names + [node]) from exc
                try:
                    state = state.merge(delta or {}, graph.channels)
                    nxt = route(graph, node, state)
                except GraphRunError as exc:
                    exc.state = state
                    exc.steps = names + [node]
                    raise
                if sp is not None:
                    sp.attributes["next"] = nxt
            step += 1
            self.summary.steps.append(StepRecord(step, node, nxt))
            names = self.summary.nodes
            every = cfg.checkpoint_every
            if every is not None and step % every == 0:
                self._save(step, node, state)
            yield node, state
            if nxt == END:
                self._save(step, node, state)
                return
            if step >= cfg.step_budget:
                self._save(step, node, state)
                raise StepBudgetExhausted(
                    f"step budget of {cfg.step_budget} exhausted (next node {nxt!r})", state=state, steps=names
                )
            node = nxt


@contextlib.contextmanager
def _traced(graph: CompiledGraph, cfg: RunConfig, sink: tracing.TraceSink | None):
    if sink is None:
        yield
        return
    handle = sink.start_run(graph.name, cfg.run_id)
    try:
        with tracing.activate(handle):
            yield
    except BaseException:
        sink.finish_run(handle, "failed")
        raise
    sink.finish_run(handle, "ok")


def stream(
    graph: CompiledGraph,
    initial: Mapping[str, Any] | GraphState | None,
    cfg: RunConfig | None = None,
    *,
    store: CheckpointStore | None = None,
    checkpoint_meta: Callable[[], Mapping[str, Any]] | None = None,
) -> Iterator[tuple[str, GraphState]]:
    """Yield ``(node, state_after_step)`` for each executed node, in order."""
    cfg = cfg or RunConfig()
    state = initial_state(initial, graph.channels)
    run = _Execution(graph, cfg, store, checkpoint_meta)
    yield from run.steps(state, graph.entry, 0)


def invoke(
    graph: CompiledGraph,
    initial: Mapping[str, Any] | GraphState | None,
    cfg: RunConfig | None = None,
    sink: tracing.TraceSink | None = None,
    *,
    store: CheckpointStore | None = None,
    checkpoint_meta: Callable[[], Mapping[str, Any]] | None = None,
) -> tuple[GraphState, RunSummary]:
    """Run ``graph`` to END and return the final state with a per-step summary.

    Raises:
        StepBudgetExhausted: the run did not reach END within ``cfg.step_budget``
            handler executions. ``exc.state`` holds the partial state.
        RouterViolation: a router picked a name outside its declared targets.
        HandlerWroteUndeclaredChannel: a handler returned an undeclared key.
        NodeFailed: a handler raised; the original error is ``exc.cause``.
    """
    cfg = cfg or RunConfig()
    state = initial_state(initial, graph.channels)
    run = _Execution(graph, cfg, store, checkpoint_meta)
    with _traced(graph, cfg, sink):
        for _, state in run.steps(state, graph.entry, 0):
            pass
    return state, run.summary


def resume(
    graph: CompiledGraph,
    cp: Checkpoint,
    cfg: RunConfig | None = None,
    sink: tracing.TraceSink | None = None,
    *,
    store: CheckpointStore | None = None,
    checkpoint_meta: Callable[[], Mapping[str, Any]] | None = None,
) -> tuple[GraphState, RunSummary]:
    """Continue a run from ``cp``.

    Execution picks up at the out-routing of ``cp.current_node``. The step
    budget counts the steps already taken before the checkpoint.
    """
    if cp.graph_fingerprint != graph.fingerprint:
        raise FingerprintMismatch(
            f"checkpoint was taken on graph {cp.graph_fingerprint[:12]}, "
            f"this graph is {graph.fingerprint[:12]}"
        )
    cfg = cfg or RunConfig(run_id=cp.run_id)
    state = cp.state
    run = _Execution(graph, cfg, store, checkpoint_meta)
    run.summary.resumed_from = cp.step_index
    run._last_saved = cp.step_index
    with _traced(graph, cfg, sink):
        nxt = route(graph, cp.current_node, state)
        if nxt != END:
            if cp.step_index >= cfg.step_budget:
                raise StepBudgetExhausted(
                    f"step budget of {cfg.step_budget} already spent at checkpoint", state=state, steps=[]
                )
            for _, state in run.steps(state, nxt, cp.step_index):
                pass
    return state, run.summary
