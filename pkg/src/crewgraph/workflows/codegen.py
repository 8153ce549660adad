"""Code generation with a reviewer feedback loop.

``generate -> review -> decide`` repeats until the reviewer approves or
``max_revisions`` drafts have been rejected. The reviewer's reply must start
with ``APPROVE`` or ``REJECT: <feedback>``; every rejection is appended to the
``feedback_history`` channel, which the generator sees in full on its next
attempt.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..crew import AgentSpec, CrewSpec, TaskSpec, as_graph_node
from ..gateway import ModelGateway, ModelRef
from ..graph import APPEND_LIST, END, ChannelSpec, CompiledGraph, GraphBuilder

APPROVED = "Approved"
REVISION_LIMIT = "RevisionLimit"


@dataclass(frozen=True)
class ReviewVerdict:
    approved: bool
    feedback: str = ""

    def __post_init__(self) -> None:
        if not self.approved and not self.feedback:
            raise ValueError("a rejection needs feedback")


def parse_verdict(text: str) -> ReviewVerdict:
    """Read an ``APPROVE`` / ``REJECT: ...`` reply.

    Replies that follow neither form count as rejections whose feedback is
    the whole reply, so a confused reviewer never approves by accident.
    """
    stripped = text.strip()
    if stripped.upper().startswith("APPROVE"):
        return ReviewVerdict(True)
    if stripped.upper().startswith("REJECT"):
        feedback = stripped[len("REJECT"):].lstrip(":").strip()
        return ReviewVerdict(False, feedback or "rejected without feedback")
    return ReviewVerdict(False, stripped or "empty review")


@dataclass
class CodegenConfig:
    max_revisions: int = 3
    generator: CrewSpec | None = None
    reviewer: CrewSpec | None = None

    def __post_init__(self) -> None:
        if self.max_revisions < 1:
            raise ValueError("max_revisions must be >= 1")


def default_generator_crew(model: ModelRef) -> CrewSpec:
    dev = AgentSpec(
        role="Senior Software Engineer",
        goal="Write correct, readable code that satisfies the request",
        backstory="You write small, well-tested Python modules.",
        model=model,
    )
    task = TaskSpec(
        description=(
            "Write code for this request:\n{task}\n\n"
            "Reviewer feedback on earlier attempts (address every point; empty on the first attempt):\n"
            "{feedback_history}"
        ),
        expected_output="The complete source code.",
        agent=dev.role,
        id="write_code",
    )
    return CrewSpec((dev,), (task,), name="code_generator")


def default_reviewer_crew(model: ModelRef) -> CrewSpec:
    reviewer = AgentSpec(
        role="Code Reviewer",
        goal="Catch defects and missing tests before code is merged",
        backstory="You review code strictly but fairly.",
        model=model,
    )
    task = TaskSpec(
        description="Review this code written for the request below.\nRequest: {task}\n\nCode:\n{code}",
        expected_output="Either APPROVE, or REJECT: followed by concrete feedback.",
        agent=reviewer.role,
        id="review_code",
    )
    return CrewSpec((reviewer,), (task,), name="code_reviewer")


def build_codegen_graph(
    cfg: CodegenConfig,
    gateway: ModelGateway,
    model: ModelRef | None = None,
    models: dict[str, ModelRef] | None = None,
) -> CompiledGraph:
    model = model or ModelRef("mock", "mock")
    models = models or {}
    generator = cfg.generator or default_generator_crew(models.get("Senior Software Engineer", model))
    reviewer = cfg.reviewer or default_reviewer_crew(models.get("Code Reviewer", model))
    write_code = as_graph_node(generator, ["task", "feedback_history"], "code", gateway)
    review_code = as_graph_node(reviewer, ["task", "code"], "verdict", gateway)

    def generate(state):
        delta = write_code(state)
        return {"code": delta["code"], "revisions": state["revisions"] + 1}

    def review(state):
        raw = review_code(state)["verdict"]
        verdict = parse_verdict(raw)
        delta = {"verdict": raw, "approved": verdict.approved}
        if not verdict.approved:
            delta["feedback_history"] = [verdict.feedback]
        return delta

    def decide(state):
        if state["approved"]:
            return {"outcome": APPROVED}
        if state["revisions"] >= cfg.max_revisions:
            return {"outcome": REVISION_LIMIT}
        return {}

    def next_step(state) -> str:
        return END if state["outcome"] else "generate"

    builder = GraphBuilder(
        "codegen",
        [
            ChannelSpec("task", default=""),
            ChannelSpec("code", default=""),
            ChannelSpec("verdict", default=""),
            ChannelSpec("approved", default=False),
            ChannelSpec("feedback_history", APPEND_LIST, default=[]),
            ChannelSpec("revisions", default=0),
            ChannelSpec("outcome", default=""),
        ],
    )
    (
        builder.add_node("generate", generate)
        .add_node("review", review)
        .add_node("decide", decide)
        .add_edge("generate", "review")
        .add_edge("review", "decide")
        .add_conditional_edge("decide", next_step, {"generate", END})
        .set_entry("generate")
    )
    return builder.compile()
