"""Role-based agents, tasks, and crews, plus the adapter that runs a crew as a graph node."""

from __future__ import annotations

import dataclasses
import re
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

from . import trace as tracing
from .errors import (
    CrewError,
    CrewFailed,
    DelegationExhausted,
    EmptyOutput,
    InvalidCrew,
    MissingInputChannel,
    ToolLoopExhausted,
    UnknownAgent,
    UnresolvedPlaceholder,
)
from .gateway import ChatMessage, ChatRequest, ModelGateway, ModelRef, parse_tool_call
from .tools import ToolParam, ToolSpec

SEQUENTIAL = "sequential"
HIERARCHICAL = "hierarchical"
DEFAULT_MAX_ITERATIONS = 5
MANAGER_ROLE = "Crew Manager"

_PLACEHOLDER = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")
_DELEGATE = re.compile(r"^DELEGATE\s+(\S+)\s+TO\s+(.+?)$")


@dataclass(frozen=True)
class AgentSpec:
    role: str
    goal: str
    backstory: str = ""
    tools: tuple[str, ...] = ()
    allow_delegation: bool = False
    model: ModelRef = field(default_factory=lambda: ModelRef("mock", "mock"))

    def __post_init__(self) -> None:
        if not self.role or not self.goal:
            raise InvalidCrew("agent role and goal must be non-empty")
        object.__setattr__(self, "tools", tuple(self.tools))


@dataclass(frozen=True)
class TaskSpec:
    description: str
    expected_output: str
    agent: str | None = None
    tools: tuple[str, ...] | None = None
    context: tuple[str, ...] = ()
    id: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "context", tuple(self.context))
        if self.tools is not None:
            object.__setattr__(self, "tools", tuple(self.tools))


@dataclass(frozen=True)
class ToolInvocation:
    name: str
    args: dict[str, Any]
    result: str


@dataclass(frozen=True)
class TaskOutput:
    task_id: str
    agent_role: str
    raw: str
    tool_invocations: tuple[ToolInvocation, ...] = ()


@dataclass(frozen=True)
class CrewOutput:
    task_outputs: tuple[TaskOutput, ...]
    final: str


@dataclass(frozen=True)
class CrewSpec:
    agents: tuple[AgentSpec, ...]
    tasks: tuple[TaskSpec, ...]
    process: str = SEQUENTIAL
    manager_model: ModelRef | None = None
    max_delegation_rounds: int = 3
    tools: tuple[ToolSpec, ...] = ()
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    name: str = "crew"

    def __post_init__(self) -> None:
        object.__setattr__(self, "agents", tuple(self.agents))
        object.__setattr__(self, "tools", tuple(self.tools))
        tasks = tuple(
            t if t.id else dataclasses.replace(t, id=f"t{i + 1}") for i, t in enumerate(self.tasks)
        )
        object.__setattr__(self, "tasks", tasks)
        self._validate()

    def _validate(self) -> None:
        if self.process not in (SEQUENTIAL, HIERARCHICAL):
            raise InvalidCrew(f"unknown process {self.process!r}")
        if self.max_delegation_rounds < 1 or self.max_iterations < 1:
            raise InvalidCrew("max_delegation_rounds and max_iterations must be positive")
        if not self.agents:
            raise InvalidCrew("a crew needs at least one agent")
        roles = [a.role for a in self.agents]
        if len(roles) != len(set(roles)):
            raise InvalidCrew("agent roles must be unique")
        tool_names = [t.name for t in self.tools]
        if len(tool_names) != len(set(tool_names)):
            raise InvalidCrew("tool names must be unique within a crew")
        for agent in self.agents:
            for name in agent.tools:
                if name not in tool_names:
                    raise InvalidCrew(f"agent {agent.role!r} refers to unknown tool {name!r}")
        seen: set[str] = set()
        for task in self.tasks:
            if task.id in seen:
                raise InvalidCrew(f"duplicate task id {task.id!r}")
            for dep in task.context:
                if dep not in seen:
                    raise InvalidCrew(f"task {task.id!r}: context {dep!r} is not an earlier task")
            for name in task.tools or ():
                if name not in tool_names:
                    raise InvalidCrew(f"task {task.id!r} refers to unknown tool {name!r}")
            if task.agent is None:
                if self.process == SEQUENTIAL:
                    raise InvalidCrew(f"task {task.id!r} has no agent (required for sequential crews)")
            elif task.agent not in roles:
                raise InvalidCrew(f"task {task.id!r} names unknown agent {task.agent!r}")
            seen.add(task.id)
        if self.process == HIERARCHICAL and self.manager_model is None:
            raise InvalidCrew("hierarchical crews need a manager_model")

    def agent(self, role: str) -> AgentSpec:
        for a in self.agents:
            if a.role == role:
                return a
        raise UnknownAgent(role)

    def tools_for(self, agent: AgentSpec, task: TaskSpec) -> list[ToolSpec]:
        names = task.tools if task.tools is not None else agent.tools
        by_name = {t.name: t for t in self.tools}
        return [by_name[n] for n in names]


# --- prompting ----------------------------------------------------------------------


def fill_placeholders(text: str, inputs: Mapping[str, str]) -> str:
    def sub(match: re.Match) -> str:
        key = match.group(1)
        if key not in inputs:
            raise UnresolvedPlaceholder(key)
        return str(inputs[key])

    return _PLACEHOLDER.sub(sub, text)


def system_prompt(agent: AgentSpec, tools: Sequence[ToolSpec] = ()) -> str:
    lines = [f"You are {agent.role}.", f"Your goal: {agent.goal}"]
    if agent.backstory:
        lines.append(agent.backstory)
    if tools:
        lines.append("")
        lines.append("You can use these tools:")
        lines.extend(f"- {t.signature()}: {t.description}" for t in tools)
        lines.append("")
        lines.append('To call a tool, reply with only a fenced JSON block: {"tool": "<name>", "args": {...}}.')
        lines.append("When you have the final answer, reply with plain text.")
    return "\n".join(lines)


def render_prompt(
    agent: AgentSpec,
    task: TaskSpec,
    context_outputs: Sequence[TaskOutput] = (),
    inputs: Mapping[str, str] | None = None,
    tools: Sequence[ToolSpec] = (),
) -> list[ChatMessage]:
    """Build the system + user messages for one task.

    Pure: identical arguments always give identical messages.
    """
    description = fill_placeholders(task.description, inputs or {})
    parts = [description, f"Expected output: {task.expected_output}"]
    if context_outputs:
        ctx = ["Context:"]
        for out in context_outputs:
            ctx.append(f"[Output of task {out.task_id}]\n{out.raw}")
        parts.append("\n\n".join(ctx))
    return [
        ChatMessage("system", system_prompt(agent, tools)),
        ChatMessage("user", "\n\n".join(parts)),
    ]


# --- execution ----------------------------------------------------------------------


def run_tool_loop(
    agent: AgentSpec,
    messages: Sequence[ChatMessage],
    tools: Sequence[ToolSpec],
    gateway: ModelGateway,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    task_id: str = "",
) -> TaskOutput:
    """Chat until the model answers in plain text.

    Each tool call is executed and its result fed back as a tool message. At
    most ``max_iterations`` tools run, so the model is called at most
    ``max_iterations + 1`` times.
    """
    if max_iterations < 1:
        raise ValueError("max_iterations must be >= 1")
    history = list(messages)
    invocations: list[ToolInvocation] = []
    while True:
        resp = gateway.chat(ChatRequest(agent.model, history, tools=list(tools) or None))
        call = parse_tool_call(resp, tools)
        if call is None:
            if not resp.text.strip():
                raise EmptyOutput(f"agent {agent.role!r} returned an empty answer")
            return TaskOutput(task_id, agent.role, resp.text, tuple(invocations))
        if len(invocations) >= max_iterations:
            raise ToolLoopExhausted(f"agent {agent.role!r} still calling tools after {max_iterations} iterations")
        tool = next(t for t in tools if t.name == call.name)
        with tracing.span("tool_call", call.name, {"agent": agent.role}):
            result = tool.run(call.args)
        invocations.append(ToolInvocation(call.name, dict(call.args), result))
        history.append(ChatMessage("assistant", resp.text, tool_call=call))
        history.append(ChatMessage("tool", result, tool_name=call.name, tool_call_id=call.id))


def execute_task(
    crew: CrewSpec,
    task: TaskSpec,
    prior: Sequence[TaskOutput],
    inputs: Mapping[str, str] | None,
    gateway: ModelGateway,
    agent_role: str | None = None,
) -> TaskOutput:
    role = agent_role or task.agent
    if role is None:
        raise UnknownAgent("<unassigned>")
    agent = crew.agent(role)
    by_id = {o.task_id: o for o in prior}
    missing = [dep for dep in task.context if dep not in by_id]
    if missing:
        raise CrewError(f"task {task.id!r} needs outputs of {missing} which have not run")
    context = [by_id[dep] for dep in task.context]
    tools = crew.tools_for(agent, task)
    with tracing.span("crew_task", task.id, {"agent": role, "crew": crew.name}):
        messages = render_prompt(agent, task, context, inputs, tools)
        return run_tool_loop(agent, messages, tools, gateway, crew.max_iterations, task.id)


def kickoff_sequential(crew: CrewSpec, inputs: Mapping[str, str] | None, gateway: ModelGateway) -> CrewOutput:
    if crew.process != SEQUENTIAL:
        raise InvalidCrew("kickoff_sequential needs a sequential crew")
    outputs: list[TaskOutput] = []
    for task in crew.tasks:
        try:
            outputs.append(execute_task(crew, task, outputs, inputs, gateway))
        except CrewError as exc:
            if isinstance(exc, CrewFailed):
                raise
            raise CrewFailed(task.id, exc) from exc
        except Exception as exc:
            raise CrewFailed(task.id, exc) from exc
    return CrewOutput(tuple(outputs), outputs[-1].raw if outputs else "")


def manager_agent(crew: CrewSpec) -> AgentSpec:
    assert crew.manager_model is not None
    return AgentSpec(
        role=MANAGER_ROLE,
        goal="Decide which pending task runs next and which agent should do it.",
        backstory="You coordinate a team and delegate work; you never do the tasks yourself.",
        model=crew.manager_model,
    )


def manager_prompt(crew: CrewSpec, ready: Sequence[TaskSpec], done: Sequence[str]) -> list[ChatMessage]:
    roster = "\n".join(f"- {a.role}: {a.goal}" for a in crew.agents)
    pending = "\n".join(
        f"- {t.id}: {t.description} (suggested agent: {t.agent or 'unassigned'})" for t in ready
    )
    completed = ", ".join(done) if done else "none"
    user = (
        f"Team:\n{roster}\n\nPending tasks:\n{pending}\n\nCompleted tasks: {completed}\n\n"
        "Reply with exactly one line: DELEGATE <task_id> TO <role>"
    )
    return [ChatMessage("system", system_prompt(manager_agent(crew))), ChatMessage("user", user)]


def parse_delegation(
    text: str, ready: Sequence[TaskSpec], roles: Sequence[str]
) -> tuple[TaskSpec, str] | None:
    """Parse ``DELEGATE <task_id> TO <role>``; ``None`` unless both names are live."""
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    if len(lines) != 1:
        return None
    match = _DELEGATE.match(lines[0])
    if not match:
        return None
    task_id, role = match.group(1), match.group(2).strip()
    task = next((t for t in ready if t.id == task_id), None)
    if task is None or role not in roles:
        return None
    return task, role


def kickoff_hierarchical(crew: CrewSpec, inputs: Mapping[str, str] | None, gateway: ModelGateway) -> CrewOutput:
    """Let a synthesized manager pick (task, agent) pairs until all tasks ran.

    An unusable manager reply is retried once; after a second failure the
    first pending task runs with its declared agent (or the first agent).
    Manager replies are capped at ``max_delegation_rounds * len(tasks)``.
    """
    if crew.process != HIERARCHICAL:
        raise InvalidCrew("kickoff_hierarchical needs a hierarchical crew")
    manager = manager_agent(crew)
    roles = [a.role for a in crew.agents]
    budget = crew.max_delegation_rounds * len(crew.tasks)
    replies = 0
    outputs: list[TaskOutput] = []
    done: list[str] = []
    while len(done) < len(crew.tasks):
        ready = [t for t in crew.tasks if t.id not in done and all(d in done for d in t.context)]
        messages = manager_prompt(crew, ready, done)
        decision = None
        for attempt in range(2):
            if replies >= budget:
                raise DelegationExhausted(f"manager used all {budget} decisions with tasks still pending")
            resp = gateway.chat(ChatRequest(manager.model, messages))
            replies += 1
            decision = parse_delegation(resp.text, ready, roles)
            if decision is not None:
                break
            messages = messages + [
                ChatMessage("assistant", resp.text),
                ChatMessage(
                    "user",
                    "That reply could not be used. Choose a pending task id and a team role, "
                    "and reply with exactly one line: DELEGATE <task_id> TO <role>",
                ),
            ]
        if decision is None:
            task = ready[0]
            decision = (task, task.agent or roles[0])
        task, role = decision
        try:
            outputs.append(execute_task(crew, task, outputs, inputs, gateway, agent_role=role))
        except Exception as exc:
            raise CrewFailed(task.id, exc) from exc
        done.append(task.id)
    return CrewOutput(tuple(outputs), outputs[-1].raw if outputs else "")


def kickoff(crew: CrewSpec, inputs: Mapping[str, str] | None, gateway: ModelGateway) -> CrewOutput:
    if crew.process == HIERARCHICAL:
        return kickoff_hierarchical(crew, inputs, gateway)
    return kickoff_sequential(crew, inputs, gateway)


# --- graph adapter ------------------------------------------------------------------


def channel_text(value: Any) -> str:
    if isinstance(value, list):
        return "\n".join(value)
    if isinstance(value, bytes):
        return value.decode("utf-8", errors="replace")
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def as_graph_node(
    crew: CrewSpec,
    input_channels: Sequence[str],
    output_channel: str,
    gateway: ModelGateway,
):
    """Wrap ``crew`` as a node handler.

    The handler reads ``input_channels`` into the crew's placeholder inputs,
    kicks the crew off, and writes the final answer to ``output_channel``.
    """

    def handler(state: Mapping[str, Any]) -> dict[str, str]:
        inputs = {}
        for name in input_channels:
            if name not in state:
                raise MissingInputChannel(name)
            inputs[name] = channel_text(state[name])
        return {output_channel: kickoff(crew, inputs, gateway).final}

    handler.__name__ = f"crew_node_{crew.name}"
    return handler


# --- declarative definitions --------------------------------------------------------


def model_from_config(doc: Mapping[str, Any]) -> ModelRef:
    return ModelRef(doc["provider"], doc["model"], doc.get("base_url", ""))


def crew_from_config(
    doc: Mapping[str, Any],
    default_model: ModelRef,
    tool_registry: Mapping[str, ToolSpec] | None = None,
    models: Mapping[str, ModelRef] | None = None,
) -> CrewSpec:
    """Build a crew from a JSON-style document.

    ``models`` maps agent role to model and overrides ``default_model``;
    an agent's own ``model`` entry wins over both.
    """
    registry = dict(tool_registry or {})
    models = dict(models or {})
    agents = []
    used_tools: dict[str, ToolSpec] = {}
    for a in doc["agents"]:
        model = model_from_config(a["model"]) if "model" in a else models.get(a["role"], default_model)
        for name in a.get("tools", []):
            if name not in registry:
                raise InvalidCrew(f"agent {a['role']!r} refers to unknown tool {name!r}")
            used_tools[name] = registry[name]
        agents.append(
            AgentSpec(
                role=a["role"],
                goal=a["goal"],
                backstory=a.get("backstory", ""),
                tools=tuple(a.get("tools", [])),
                allow_delegation=bool(a.get("allow_delegation", False)),
                model=model,
            )
        )
    tasks = []
    for t in doc["tasks"]:
        for name in t.get("tools") or []:
            if name not in registry:
                raise InvalidCrew(f"task refers to unknown tool {name!r}")
            used_tools[name] = registry[name]
        tasks.append(
            TaskSpec(
                description=t["description"],
                expected_output=t["expected_output"],
                agent=t.get("agent"),
                tools=tuple(t["tools"]) if t.get("tools") is not None else None,
                context=tuple(t.get("context", [])),
                id=t.get("id", ""),
            )
        )
    manager = doc.get("manager_model")
    return CrewSpec(
        agents=tuple(agents),
        tasks=tuple(tasks),
        process=doc.get("process", SEQUENTIAL),
        manager_model=model_from_config(manager) if manager else (default_model if doc.get("process") == HIERARCHICAL else None),
        max_delegation_rounds=int(doc.get("max_delegation_rounds", 3)),
        tools=tuple(used_tools.values()),
        max_iterations=int(doc.get("max_iterations", DEFAULT_MAX_ITERATIONS)),
        name=doc.get("name", "crew"),
    )


__all__ = [
    "AgentSpec",
    "CrewOutput",
    "CrewSpec",
    "TaskOutput",
    "TaskSpec",
    "ToolInvocation",
    "ToolParam",
    "ToolSpec",
    "as_graph_node",
    "crew_from_config",
    "execute_task",
    "kickoff",
    "kickoff_hierarchical",
    "kickoff_sequential",
    "render_prompt",
    "run_tool_loop",
]
