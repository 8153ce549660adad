"""Email workflow: check the inbox, draft replies with a crew, then wait for the next run.

The inbox and outbox are JSONL files. Inbox records look like
``{"id", "from", "subject", "body", "status"}`` with status ``new``,
``drafted`` or ``sent``; drafting flips an inbox record to ``drafted`` and
appends the reply to the outbox with status ``drafted``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any

from ..crew import AgentSpec, CrewSpec, TaskSpec, as_graph_node
from ..gateway import ModelGateway, ModelRef
from ..graph import APPEND_LIST, END, ChannelSpec, CompiledGraph, GraphBuilder
from ..trace import Clock, SystemClock, isoformat
from .jsonl import append_jsonl, read_jsonl, write_jsonl

STATUSES = ("new", "drafted", "sent")


@dataclass(frozen=True)
class EmailRecord:
    id: str
    sender: str
    subject: str
    body: str
    status: str = "new"

    def __post_init__(self) -> None:
        if self.status not in STATUSES:
            raise ValueError(f"email {self.id!r}: invalid status {self.status!r}")

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> EmailRecord:
        return cls(str(doc["id"]), doc.get("from", ""), doc.get("subject", ""), doc.get("body", ""), doc.get("status", "new"))

    def to_json(self) -> dict[str, Any]:
        return {"id": self.id, "from": self.sender, "subject": self.subject, "body": self.body, "status": self.status}


def load_inbox(path: str | Path) -> list[EmailRecord]:
    records = [EmailRecord.from_json(doc) for doc in read_jsonl(path)]
    ids = [r.id for r in records]
    if len(ids) != len(set(ids)):
        raise ValueError(f"{path}: duplicate email ids")
    return records


@dataclass
class EmailConfig:
    inbox: Path
    outbox: Path
    poll_interval_s: int = 300
    crew: CrewSpec | None = None


def default_email_crew(model: ModelRef, models: dict[str, ModelRef] | None = None) -> CrewSpec:
    models = models or {}
    specialist = AgentSpec(
        role="Email Action Specialist",
        goal="Identify the action each email requires",
        backstory="You triage incoming email and say plainly what the sender needs.",
        model=models.get("Email Action Specialist", model),
    )
    writer = AgentSpec(
        role="Email Response Writer",
        goal="Draft clear, polite replies that resolve the sender's request",
        backstory="You write concise professional email replies.",
        model=models.get("Email Response Writer", model),
    )
    analyze = TaskSpec(
        description=(
            "Read the email below and identify the action needed.\n"
            "From: {sender}\nSubject: {subject}\n\n{body}"
        ),
        expected_output="One short paragraph naming the action the reply must take.",
        agent=specialist.role,
        id="identify_action",
    )
    draft = TaskSpec(
        description='Draft a reply to the email from {sender} about "{subject}".',
        expected_output="The reply body, ready to send.",
        agent=writer.role,
        context=("identify_action",),
        id="draft_reply",
    )
    return CrewSpec((specialist, writer), (analyze, draft), name="email_drafter")


def build_email_graph(cfg: EmailConfig, gateway: ModelGateway, model: ModelRef | None = None, clock: Clock | None = None) -> CompiledGraph:
    clock = clock or SystemClock()
    crew = cfg.crew or default_email_crew(model or ModelRef("mock", "mock"))
    draft_node = as_graph_node(crew, ["sender", "subject", "body"], "draft", gateway)

    def check_new_emails(state):
        return {"pending_ids": [r.id for r in load_inbox(cfg.inbox) if r.status == "new"]}

    def compose(state):
        inbox = load_inbox(cfg.inbox)
        by_id = {r.id: r for r in inbox}
        drafted = []
        draft = state.get("draft", "")
        for email_id in state["pending_ids"]:
            rec = by_id[email_id]
            if rec.status != "new":
                continue
            draft = draft_node({"sender": rec.sender, "subject": rec.subject, "body": rec.body})["draft"]
            append_jsonl(
                cfg.outbox,
                {
                    "id": f"reply-{rec.id}",
                    "in_reply_to": rec.id,
                    "to": rec.sender,
                    "subject": rec.subject if rec.subject.lower().startswith("re:") else f"Re: {rec.subject}",
                    "body": draft,
                    "status": "drafted",
                },
            )
            by_id[email_id] = EmailRecord(rec.id, rec.sender, rec.subject, rec.body, "drafted")
            write_jsonl(cfg.inbox, [by_id[r.id].to_json() for r in inbox])
            drafted.append(email_id)
        return {"draft": draft, "drafted_ids": drafted, "pending_ids": []}

    def wait(state):
        return {"next_run_at": isoformat(clock.now() + cfg.poll_interval_s)}

    def has_mail(state) -> str:
        return "compose" if state["pending_ids"] else "wait"

    builder = GraphBuilder(
        "email",
        [
            ChannelSpec("pending_ids", default=[]),
            ChannelSpec("draft", default=""),
            ChannelSpec("drafted_ids", APPEND_LIST, default=[]),
            ChannelSpec("next_run_at", default=""),
        ],
    )
    (
        builder.add_node("check_new_emails", check_new_emails)
        .add_node("compose", compose)
        .add_node("wait", wait)
        .add_conditional_edge("check_new_emails", has_mail, {"compose", "wait"})
        .add_edge("compose", "wait")
        .add_edge("wait", END)
        .set_entry("check_new_emails")
    )
    return builder.compile()
