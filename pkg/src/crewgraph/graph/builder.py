"""Graph construction and compile-time validation."""

from __future__ import annotations

import hashlib
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any

from ..errors import (
    ConflictingEdge,
    DuplicateNode,
    EmptyTargets,
    InvalidChannel,
    MissingEntry,
    MissingOutRouting,
    ReservedName,
    UnknownNode,
    UnreachableNode,
)
from .state import ChannelSpec, GraphState, canonical_json

END = "END"

NodeHandler = Callable[[GraphState], Mapping[str, Any]]
RouterFn = Callable[[GraphState], str]


@dataclass(frozen=True)
class Edge:
    source: str
    target: str


@dataclass(frozen=True)
class ConditionalEdge:
    source: str
    router: RouterFn
    targets: frozenset[str]


class GraphBuilder:
    """Mutable graph under construction. Every mutator returns ``self``.

    Edge endpoints are not checked until :meth:`compile`, so nodes and edges
    may be declared in any order.
    """

    def __init__(self, name: str = "graph", channels: Iterable[ChannelSpec] = ()):
        self.name = name
        self.nodes: dict[str, NodeHandler] = {}
        self.edges: dict[str, Edge] = {}
        self.conditional_edges: dict[str, ConditionalEdge] = {}
        self.entry: str | None = None
        self.channels: dict[str, ChannelSpec] = {}
        for spec in channels:
            self.add_channel(spec)

    def add_channel(self, spec: ChannelSpec) -> GraphBuilder:
        if spec.name in self.channels:
            raise InvalidChannel(f"channel {spec.name!r} declared twice")
        self.channels[spec.name] = spec
        return self

    def add_node(self, name: str, handler: NodeHandler) -> GraphBuilder:
        if name == END:
            raise ReservedName(name)
        if not name:
            raise ValueError("node name must be non-empty")
        if name in self.nodes:
            raise DuplicateNode(name)
        self.nodes[name] = handler
        return self

    def _check_out_routing(self, source: str) -> None:
        if source in self.edges or source in self.conditional_edges:
            raise ConflictingEdge(source)

    def add_edge(self, source: str, target: str) -> GraphBuilder:
        self._check_out_routing(source)
        self.edges[source] = Edge(source, target)
        return self

    def add_conditional_edge(self, source: str, router: RouterFn, targets: Iterable[str]) -> GraphBuilder:
        targets = frozenset(targets)
        if not targets:
            raise EmptyTargets(source)
        self._check_out_routing(source)
        self.conditional_edges[source] = ConditionalEdge(source, router, targets)
        return self

    def set_entry(self, name: str) -> GraphBuilder:
        # last write wins
        self.entry = name
        return self

    def compile(self) -> CompiledGraph:
        return compile_graph(self)


@dataclass(frozen=True)
class Certificate:
    entry: str
    nodes: tuple[str, ...]
    fingerprint: str
    no_path_to_end: tuple[str, ...] = ()

    @property
    def warnings(self) -> list[str]:
        return [f"NoPathToEnd: {name}" for name in self.no_path_to_end]


@dataclass(frozen=True)
class CompiledGraph:
    name: str
    nodes: Mapping[str, NodeHandler]
    edges: Mapping[str, Edge]
    conditional_edges: Mapping[str, ConditionalEdge]
    entry: str
    channels: Mapping[str, ChannelSpec]
    certificate: Certificate = field(repr=False)

    @property
    def fingerprint(self) -> str:
        return self.certificate.fingerprint

    def successors(self, node: str) -> frozenset[str]:
        if node in self.edges:
            return frozenset([self.edges[node].target])
        return self.conditional_edges[node].targets

    def topology(self) -> dict[str, Any]:
        """Sorted, hashable description of nodes and edges (no callables)."""
        return topology_doc(self.nodes, self.edges, self.conditional_edges, self.entry)


def topology_doc(nodes, edges, conditional_edges, entry) -> dict[str, Any]:
    return {
        "entry": entry,
        "nodes": sorted(nodes),
        "edges": sorted([e.source, e.target] for e in edges.values()),
        "conditional_edges": sorted([c.source, sorted(c.targets)] for c in conditional_edges.values()),
    }


def _reachable(start: str, successors: Callable[[str], Iterable[str]]) -> set[str]:
    seen = {start}
    stack = [start]
    while stack:
        node = stack.pop()
        for nxt in successors(node):
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return seen


def compile_graph(builder: GraphBuilder) -> CompiledGraph:
    if builder.entry is None:
        raise MissingEntry()
    known = set(builder.nodes)
    if builder.entry not in known:
        raise UnknownNode(builder.entry)

    out: dict[str, set[str]] = {}
    for source, edge in builder.edges.items():
        out[source] = {edge.target}
    for source, cond in builder.conditional_edges.items():
        out[source] = set(cond.targets)
    for source in sorted(out):
        if source not in known:
            raise UnknownNode(source)
        for target in sorted(out[source]):
            if target != END and target not in known:
                raise UnknownNode(target)
    for name in builder.nodes:
        if name not in out:
            raise MissingOutRouting(name)

    reachable = _reachable(builder.entry, lambda n: out.get(n, ()))
    for name in builder.nodes:
        if name not in reachable:
            raise UnreachableNode(name)

    # nodes with no route to END are legal (loops are bounded by the step budget)
    incoming: dict[str, set[str]] = {}
    for source, targets in out.items():
        for target in targets:
            incoming.setdefault(target, set()).add(source)
    reaches_end = _reachable(END, lambda n: incoming.get(n, ()))
    stuck = tuple(sorted(n for n in builder.nodes if n not in reaches_end))

    topo = topology_doc(builder.nodes, builder.edges, builder.conditional_edges, builder.entry)
    fingerprint = hashlib.sha256(canonical_json(topo)).hexdigest()
    cert = Certificate(builder.entry, tuple(sorted(builder.nodes)), fingerprint, stuck)
    return CompiledGraph(
        name=builder.name,
        nodes=MappingProxyType(dict(builder.nodes)),
        edges=MappingProxyType(dict(builder.edges)),
        conditional_edges=MappingProxyType(dict(builder.conditional_edges)),
        entry=builder.entry,
        channels=MappingProxyType(dict(builder.channels)),
        certificate=cert,
    )
