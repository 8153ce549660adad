"""Ticket audit and forwarding.

Tickets are processed one at a time from the ``queue`` channel:
``ingest -> retrieve -> audit -> forward`` and back to ``ingest`` while the
queue is non-empty. ``retrieve`` embeds the ticket and pulls the ``k``
nearest historical tickets; ``audit`` asks a crew for ``CATEGORY: <name>``
and falls back to the majority category among the hits; ``forward``
appends a :class:`TicketDecision` line to the decisions file.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

from .. import trace as tracing
from ..crew import AgentSpec, CrewSpec, TaskSpec, kickoff
from ..errors import UnknownCategory
from ..gateway import ModelGateway, ModelRef
from ..graph import APPEND_LIST, END, ChannelSpec, CompiledGraph, GraphBuilder
from ..vectorstore import SearchHit, VectorIndex
from .jsonl import append_jsonl

_CATEGORY = re.compile(r"^\s*CATEGORY:\s*(.+?)\s*$", re.MULTILINE)
RETRY_NOTE = "Your previous answer was not usable. Answer with exactly one line: CATEGORY: <one of the allowed categories>"


@dataclass(frozen=True)
class TicketDecision:
    ticket_id: str
    category: str
    destination_queue: str
    supporting_hits: tuple[SearchHit, ...]
    rationale: str

    def to_json(self) -> dict:
        return {
            "ticket_id": self.ticket_id,
            "category": self.category,
            "destination_queue": self.destination_queue,
            "supporting_hits": [h.to_json() for h in self.supporting_hits],
            "rationale": self.rationale,
        }


@dataclass
class TicketConfig:
    routing: dict[str, str]
    tickets: dict[str, str]
    decisions: Path
    k: int = 3
    embedding_model: ModelRef = field(default_factory=lambda: ModelRef("mock", "mock-embed"))
    auditor: CrewSpec | None = None

    def __post_init__(self) -> None:
        if not self.routing:
            raise ValueError("routing table must not be empty")
        if self.k < 1:
            raise ValueError("k must be positive")


def normalize_ticket(text: str) -> str:
    return " ".join(text.split())


def parse_category(text: str, routing: Mapping[str, str]) -> str | None:
    for match in _CATEGORY.finditer(text):
        name = match.group(1)
        if name in routing:
            return name
    return None


def majority_category(hits: Sequence[SearchHit], routing: Mapping[str, str]) -> str | None:
    """Most frequent routable category among hits; ties go to the smallest name."""
    counts = Counter(h.payload.get("category") for h in hits if h.payload.get("category") in routing)
    if not counts:
        return None
    best = max(counts.values())
    return min(c for c, n in counts.items() if n == best)


def format_hits(hits: Sequence[SearchHit]) -> str:
    if not hits:
        return "(no similar tickets found)"
    lines = []
    for h in hits:
        lines.append(f"- {h.id} [category={h.payload.get('category', '?')}] score={h.score:.4f}: {h.payload.get('text', '')}")
    return "\n".join(lines)


def default_auditor_crew(model: ModelRef) -> CrewSpec:
    auditor = AgentSpec(
        role="Ticket Auditor",
        goal="Classify each work-order ticket so it reaches the right team",
        backstory="You audit incoming tickets against similar resolved tickets.",
        model=model,
    )
    task = TaskSpec(
        description=(
            "Audit ticket {ticket_id}:\n{ticket}\n\n"
            "Similar historical tickets:\n{hits}\n\n"
            "Allowed categories: {categories}\n{note}"
        ),
        expected_output="Exactly one line: CATEGORY: <name>",
        agent=auditor.role,
        id="audit_ticket",
    )
    return CrewSpec((auditor,), (task,), name="ticket_auditor")


def hits_from_state(rows: Sequence[str]) -> list[SearchHit]:
    hits = []
    for row in rows:
        doc = json.loads(row)
        hits.append(SearchHit(doc["id"], doc["score"], doc["payload"]))
    return hits


def build_ticket_graph(
    cfg: TicketConfig,
    gateway: ModelGateway,
    index: VectorIndex,
    model: ModelRef | None = None,
) -> CompiledGraph:
    crew = cfg.auditor or default_auditor_crew(model or ModelRef("mock", "mock"))
    categories = ", ".join(sorted(cfg.routing))

    def ingest(state):
        queue = state["queue"]
        ticket_id = queue[0]
        return {
            "queue": queue[1:],
            "ticket_id": ticket_id,
            "ticket_text": normalize_ticket(cfg.tickets[ticket_id]),
            "hits": [],
            "category": "",
            "rationale": "",
        }

    def retrieve(state):
        vector = gateway.embed(cfg.embedding_model, [state["ticket_text"]])[0]
        with tracing.span("retrieval", "search", {"k": cfg.k, "index_size": len(index)}):
            hits = index.search(vector, cfg.k)
        return {"hits": [json.dumps(h.to_json(), sort_keys=True) for h in hits]}

    def audit(state):
        hits = hits_from_state(state["hits"])
        inputs = {
            "ticket_id": state["ticket_id"],
            "ticket": state["ticket_text"],
            "hits": format_hits(hits),
            "categories": categories,
            "note": "",
        }
        answer = ""
        for _ in range(2):
            answer = kickoff(crew, inputs, gateway).final
            category = parse_category(answer, cfg.routing)
            if category is not None:
                return {"category": category, "rationale": answer.strip()}
            inputs["note"] = RETRY_NOTE
        category = majority_category(hits, cfg.routing)
        if category is None:
            raise UnknownCategory(
                f"ticket {state['ticket_id']!r}: no usable answer ({answer.strip()[:80]!r}) and no categorized hits"
            )
        return {"category": category, "rationale": f"fallback: majority category among {len(hits)} hits"}

    def forward(state):
        decision = TicketDecision(
            ticket_id=state["ticket_id"],
            category=state["category"],
            destination_queue=cfg.routing[state["category"]],
            supporting_hits=tuple(hits_from_state(state["hits"])),
            rationale=state["rationale"],
        )
        append_jsonl(cfg.decisions, decision.to_json())
        return {"decided_ids": [decision.ticket_id]}

    def more_tickets(state) -> str:
        return "ingest" if state["queue"] else END

    builder = GraphBuilder(
        "ticket",
        [
            ChannelSpec("queue", default=[]),
            ChannelSpec("ticket_id", default=""),
            ChannelSpec("ticket_text", default=""),
            ChannelSpec("hits", default=[]),
            ChannelSpec("category", default=""),
            ChannelSpec("rationale", default=""),
            ChannelSpec("decided_ids", APPEND_LIST, default=[]),
        ],
    )
    (
        builder.add_node("ingest", ingest)
        .add_node("retrieve", retrieve)
        .add_node("audit", audit)
        .add_node("forward", forward)
        .add_edge("ingest", "retrieve")
        .add_edge("retrieve", "audit")
        .add_edge("audit", "forward")
        .add_conditional_edge("forward", more_tickets, {"ingest", END})
        .set_entry("ingest")
    )
    return builder.compile()


def ticket_initial_state(cfg: TicketConfig) -> dict:
    return {"queue": list(cfg.tickets)}


def build_history_index(records: Sequence[Mapping[str, str]], gateway: ModelGateway, embedding_model: ModelRef) -> VectorIndex:
    """Embed labeled historical tickets (``id``, ``text``, ``category``) into a fresh index."""
    if not records:
        raise ValueError("no historical tickets to index")
    texts = [normalize_ticket(r["text"]) for r in records]
    vectors = gateway.embed(embedding_model, texts)
    index = VectorIndex(len(vectors[0]))
    for rec, text, vec in zip(records, texts, vectors):
        index.add(str(rec["id"]), vec, {"category": rec["category"], "text": text})
    return index
