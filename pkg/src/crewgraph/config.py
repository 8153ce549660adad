"""Declarative workflow configuration: loading, schema checks, and workflow assembly.

A config is one JSON document. Relative paths resolve against the config
file's directory. Secrets never live in the file; network providers read
``CREWGRAPH_API_KEY`` / ``CREWGRAPH_BASE_URL`` from the environment.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import jsonschema

from .crew import crew_from_config, model_from_config
from .errors import ConfigError
from .gateway import ModelGateway, ModelRef, ScriptedProvider
from .graph import CompiledGraph
from .trace import Clock
from .vectorstore import VectorIndex
from .workflows import (
    CodegenConfig,
    EmailConfig,
    TicketConfig,
    build_codegen_graph,
    build_email_graph,
    build_history_index,
    build_ticket_graph,
    ticket_initial_state,
)
from .workflows.email import default_email_crew
from .workflows.jsonl import read_jsonl

WORKFLOWS = ("email", "codegen", "ticket")

_MODEL = {
    "type": "object",
    "required": ["provider", "model"],
    "additionalProperties": False,
    "properties": {
        "provider": {"enum": ["openai_compat", "ollama", "mock"]},
        "model": {"type": "string", "minLength": 1},
        "base_url": {"type": "string"},
    },
}

_CREW = {
    "type": "object",
    "required": ["agents", "tasks"],
    "properties": {
        "process": {"enum": ["sequential", "hierarchical"]},
        "agents": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["role", "goal"],
                "properties": {
                    "role": {"type": "string", "minLength": 1},
                    "goal": {"type": "string", "minLength": 1},
                    "backstory": {"type": "string"},
                    "tools": {"type": "array", "items": {"type": "string"}},
                    "allow_delegation": {"type": "boolean"},
                    "model": _MODEL,
                },
            },
        },
        "tasks": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["description", "expected_output"],
                "properties": {
                    "id": {"type": "string"},
                    "description": {"type": "string"},
                    "expected_output": {"type": "string"},
                    "agent": {"type": "string"},
                    "tools": {"type": "array", "items": {"type": "string"}},
                    "context": {"type": "array", "items": {"type": "string"}},
                },
            },
        },
        "manager_model": _MODEL,
        "max_delegation_rounds": {"type": "integer", "minimum": 1},
        "max_iterations": {"type": "integer", "minimum": 1},
    },
}


def _requires(workflow: str, section: str, fields: list[str]) -> dict:
    return {
        "if": {"properties": {"workflow": {"const": workflow}}},
        "then": {"required": [section], "properties": {section: {"required": fields}}},
    }


SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["workflow", "model"],
    "additionalProperties": False,
    "properties": {
        "workflow": {"enum": list(WORKFLOWS)},
        "model": _MODEL,
        "models": {"type": "object", "additionalProperties": _MODEL},
        "embedding_model": _MODEL,
        "mock_script": {"type": "string"},
        "paths": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                name: {"type": "string", "minLength": 1}
                for name in ("inbox", "outbox", "tickets", "index", "history", "decisions", "checkpoints", "trace_out")
            },
        },
        "params": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "task": {"type": "string", "minLength": 1},
                "max_revisions": {"type": "integer", "minimum": 1},
                "k": {"type": "integer", "minimum": 1},
                "routing": {
                    "type": "object",
                    "minProperties": 1,
                    "additionalProperties": {"type": "string", "minLength": 1},
                },
                "poll_interval_s": {"type": "integer", "minimum": 0},
            },
        },
        "run": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "step_budget": {"type": "integer", "minimum": 1},
                "checkpoint_every": {"type": "integer", "minimum": 1},
            },
        },
        "crews": {"type": "object", "additionalProperties": _CREW},
    },
    "allOf": [
        _requires("email", "paths", ["inbox", "outbox"]),
        _requires("codegen", "params", ["task"]),
        _requires("ticket", "params", ["routing"]),
        _requires("ticket", "paths", ["tickets", "decisions"]),
        {
            "if": {"properties": {"workflow": {"const": "ticket"}}},
            "then": {
                "properties": {
                    "paths": {"anyOf": [{"required": ["index"]}, {"required": ["history"]}]}
                }
            },
        },
    ],
}

CREW_NAMES = {"email": ("drafter",), "codegen": ("generator", "reviewer"), "ticket": ("auditor",)}
INPUT_PATHS = ("inbox", "tickets", "index", "history")


@dataclass
class WorkflowConfig:
    doc: dict[str, Any]
    base_dir: Path
    source: Path

    @property
    def workflow(self) -> str:
        return self.doc["workflow"]

    @property
    def params(self) -> dict[str, Any]:
        return self.doc.get("params", {})

    @property
    def run(self) -> dict[str, Any]:
        return self.doc.get("run", {})

    def path(self, name: str) -> Path | None:
        raw = self.doc.get("paths", {}).get(name)
        return (self.base_dir / raw) if raw else None

    @property
    def mock_script(self) -> Path | None:
        raw = self.doc.get("mock_script")
        return (self.base_dir / raw) if raw else None

    def model(self) -> ModelRef:
        return model_from_config(self.doc["model"])

    def models(self) -> dict[str, ModelRef]:
        return {role: model_from_config(m) for role, m in self.doc.get("models", {}).items()}

    def embedding_model(self) -> ModelRef:
        doc = self.doc.get("embedding_model")
        return model_from_config(doc) if doc else ModelRef("mock", "mock-embed")

    def uses_mock(self) -> bool:
        # mock embeddings are computed, not scripted, so only chat models count
        refs = [self.doc["model"], *self.doc.get("models", {}).values()]
        for crew in self.doc.get("crews", {}).values():
            refs.extend(a["model"] for a in crew["agents"] if "model" in a)
            if "manager_model" in crew:
                refs.append(crew["manager_model"])
        return any(r["provider"] == "mock" for r in refs)


def parse_document(text: str, source: str = "<config>") -> dict[str, Any]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return doc


def schema_errors(doc: Any) -> list[str]:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    out = []
    for err in sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path))):
        where = ".".join(str(p) for p in err.absolute_path) or "<root>"
        out.append(f"{where}: {err.message}")
    return out


def load_config(path: str | Path) -> WorkflowConfig:
    """Read, schema-check, and path-check a config file.

    Raises:
        FileNotFoundError: the file does not exist.
        ConfigError: with every problem found, one per line.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    doc = parse_document(text, str(path))
    errors = schema_errors(doc)
    if errors:
        raise ConfigError("\n".join(f"{path}: {e}" for e in errors))
    cfg = WorkflowConfig(doc, path.resolve().parent, path)
    problems = []
    for name in INPUT_PATHS:
        p = cfg.path(name)
        if p is not None and not p.exists():
            problems.append(f"paths.{name}: {p} does not exist")
    if cfg.uses_mock():
        if cfg.mock_script is None:
            problems.append("mock_script: required when a mock provider is configured")
        elif not cfg.mock_script.exists():
            problems.append(f"mock_script: {cfg.mock_script} does not exist")
    for name in ("outbox", "decisions", "trace_out"):
        p = cfg.path(name)
        if p is not None and not p.parent.exists():
            problems.append(f"paths.{name}: directory {p.parent} does not exist")
    for name in doc.get("crews", {}):
        if name not in CREW_NAMES[cfg.workflow]:
            problems.append(f"crews.{name}: {cfg.workflow} workflow has crews {list(CREW_NAMES[cfg.workflow])}")
    if problems:
        raise ConfigError("\n".join(f"{path}: {p}" for p in problems))
    return cfg


def load_mock_provider(cfg: WorkflowConfig) -> ScriptedProvider | None:
    if cfg.mock_script is None:
        return None
    doc = parse_document(cfg.mock_script.read_text(encoding="utf-8"), str(cfg.mock_script))
    try:
        return ScriptedProvider.from_document(doc)
    except ValueError as exc:
        raise ConfigError(f"{cfg.mock_script}: {exc}") from None


def _crew(cfg: WorkflowConfig, name: str):
    doc = cfg.doc.get("crews", {}).get(name)
    if doc is None:
        return None
    return crew_from_config({"name": name, **doc}, cfg.model(), models=cfg.models())


def build_workflow(
    cfg: WorkflowConfig, gateway: ModelGateway, clock: Clock | None = None
) -> tuple[CompiledGraph, dict[str, Any]]:
    """Compile the configured workflow and return it with its initial state."""
    params = cfg.params
    if cfg.workflow == "email":
        email_cfg = EmailConfig(
            inbox=cfg.path("inbox"),
            outbox=cfg.path("outbox"),
            poll_interval_s=params.get("poll_interval_s", 300),
            crew=_crew(cfg, "drafter"),
        )
        if email_cfg.crew is None:
            email_cfg.crew = default_email_crew(cfg.model(), cfg.models())
        return build_email_graph(email_cfg, gateway, cfg.model(), clock), {}
    if cfg.workflow == "codegen":
        cg = CodegenConfig(
            max_revisions=params.get("max_revisions", 3),
            generator=_crew(cfg, "generator"),
            reviewer=_crew(cfg, "reviewer"),
        )
        return build_codegen_graph(cg, gateway, cfg.model(), cfg.models()), {"task": params["task"]}
    tickets = {}
    for row in read_jsonl(cfg.path("tickets")):
        tickets[str(row["id"])] = row["text"]
    if not tickets:
        raise ConfigError(f"paths.tickets: {cfg.path('tickets')} has no tickets")
    embedding_model = cfg.embedding_model()
    if cfg.path("index") is not None:
        index = VectorIndex.load(cfg.path("index"))
    else:
        index = build_history_index(read_jsonl(cfg.path("history")), gateway, embedding_model)
    auditor = _crew(cfg, "auditor")
    model = cfg.models().get("Ticket Auditor", cfg.model())
    tk = TicketConfig(
        routing=dict(params["routing"]),
        tickets=tickets,
        decisions=cfg.path("decisions"),
        k=params.get("k", 3),
        embedding_model=embedding_model,
        auditor=auditor,
    )
    return build_ticket_graph(tk, gateway, index, model), ticket_initial_state(tk)


def summarize(graph: CompiledGraph) -> list[tuple[str, ...]]:
    """Rows describing the graph, for tab-delimited output."""
    rows: list[tuple[str, ...]] = [("graph", graph.name), ("entry", graph.entry), ("fingerprint", graph.fingerprint)]
    rows.extend(("node", name) for name in graph.nodes)
    for name in graph.nodes:
        if name in graph.edges:
            rows.append(("edge", name, graph.edges[name].target, "plain"))
        else:
            rows.append(("edge", name, ",".join(sorted(graph.conditional_edges[name].targets)), "conditional"))
    rows.extend(("channel", c.name, c.merge_policy) for c in graph.channels.values())
    rows.extend(("warning", w) for w in graph.certificate.warnings)
    return rows

