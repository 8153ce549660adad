"""Chat and embedding clients for OpenAI-compatible, Ollama, and scripted mock providers."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import re
import struct
import threading
import time
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any, Union

import httpx

from . import trace as tracing
from .errors import (
    DimensionMismatch,
    MalformedResponse,
    ProviderError,
    ScriptExhausted,
    UnknownTool,
)
from .tools import ToolSpec, tool_index

log = logging.getLogger(__name__)

PROVIDERS = ("openai_compat", "ollama", "mock")
ROLES = ("system", "user", "assistant", "tool")
MOCK_EMBED_DIM = 64
NAMESPACE_SEP = "::"
NAMESPACE_MIX = 0.35
RETRY_STATUSES = frozenset({429, 500, 502, 503, 504})


@dataclass(frozen=True)
class ModelRef:
    provider: str
    model: str
    base_url: str = ""
    api_key: str | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.provider not in PROVIDERS:
            raise ValueError(f"provider must be one of {PROVIDERS}, got {self.provider!r}")
        if self.provider != "mock":
            if not self.base_url:
                object.__setattr__(self, "base_url", os.environ.get("CREWGRAPH_BASE_URL", ""))
            if not self.base_url:
                raise ValueError(f"{self.provider} model {self.model!r} needs a base_url (or CREWGRAPH_BASE_URL)")
            if self.api_key is None and os.environ.get("CREWGRAPH_API_KEY"):
                object.__setattr__(self, "api_key", os.environ["CREWGRAPH_API_KEY"])


@dataclass(frozen=True)
class ToolCall:
    name: str
    args: dict[str, Any] = field(default_factory=dict)
    id: str | None = None

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("tool call name must be non-empty")


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str = ""
    tool_call: ToolCall | None = None
    tool_name: str | None = None
    tool_call_id: str | None = None

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"invalid role {self.role!r}")
        if self.tool_call is not None and self.role != "assistant":
            raise ValueError("tool_call is only allowed on assistant messages")
        if self.tool_name is not None and self.role != "tool":
            raise ValueError("tool_name is only allowed on tool messages")


@dataclass(frozen=True)
class ChatRequest:
    model: ModelRef
    messages: Sequence[ChatMessage]
    tools: Sequence[ToolSpec] | None = None
    temperature: float = 0.0


@dataclass(frozen=True)
class ChatResponse:
    message: ChatMessage
    usage: tuple[int, int] = (0, 0)
    finish_reason: str = "stop"

    def __post_init__(self) -> None:
        if self.message.role != "assistant":
            raise ValueError("response message must have role assistant")

    @property
    def text(self) -> str:
        return self.message.content


# --- wire formats -------------------------------------------------------------------


def _tool_call_id(msg: ChatMessage, index: int) -> str:
    return msg.tool_call.id if msg.tool_call and msg.tool_call.id else f"call_{index}"


def openai_chat_body(req: ChatRequest) -> dict[str, Any]:
    messages = []
    last_call_id = None
    for i, msg in enumerate(req.messages):
        item: dict[str, Any] = {"role": msg.role, "content": msg.content}
        if msg.tool_call is not None:
            last_call_id = _tool_call_id(msg, i)
            item["tool_calls"] = [
                {
                    "id": last_call_id,
                    "type": "function",
                    "function": {
                        "name": msg.tool_call.name,
                        "arguments": json.dumps(msg.tool_call.args, sort_keys=True),
                    },
                }
            ]
        if msg.role == "tool":
            item["tool_call_id"] = msg.tool_call_id or last_call_id or f"call_{i}"
        messages.append(item)
    body: dict[str, Any] = {"model": req.model.model, "messages": messages, "temperature": req.temperature}
    if req.tools:
        body["tools"] = [t.schema() for t in req.tools]
    return body


def ollama_chat_body(req: ChatRequest) -> dict[str, Any]:
    messages = []
    for msg in req.messages:
        item: dict[str, Any] = {"role": msg.role, "content": msg.content}
        if msg.tool_call is not None:
            item["tool_calls"] = [{"function": {"name": msg.tool_call.name, "arguments": msg.tool_call.args}}]
        if msg.tool_name is not None:
            item["tool_name"] = msg.tool_name
        messages.append(item)
    body: dict[str, Any] = {
        "model": req.model.model,
        "messages": messages,
        "stream": False,
        "options": {"temperature": req.temperature},
    }
    if req.tools:
        body["tools"] = [t.schema() for t in req.tools]
    return body


def parse_openai_chat(doc: Mapping[str, Any]) -> ChatResponse:
    try:
        choice = doc["choices"][0]
        msg = choice["message"]
        content = msg.get("content") or ""
        tool_call = None
        calls = msg.get("tool_calls") or []
        if calls:
            fn = calls[0]["function"]
            raw_args = fn.get("arguments") or "{}"
            args = json.loads(raw_args) if isinstance(raw_args, str) else dict(raw_args)
            tool_call = ToolCall(fn["name"], args, calls[0].get("id"))
        usage = doc.get("usage") or {}
        return ChatResponse(
            ChatMessage("assistant", content, tool_call=tool_call),
            (int(usage.get("prompt_tokens", 0)), int(usage.get("completion_tokens", 0))),
            choice.get("finish_reason") or "stop",
        )
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise MalformedResponse(f"unexpected chat completion payload: {exc!r}") from None


def parse_ollama_chat(doc: Mapping[str, Any]) -> ChatResponse:
    try:
        msg = doc["message"]
        tool_call = None
        calls = msg.get("tool_calls") or []
        if calls:
            fn = calls[0]["function"]
            args = fn.get("arguments") or {}
            if isinstance(args, str):
                args = json.loads(args)
            tool_call = ToolCall(fn["name"], dict(args))
        return ChatResponse(
            ChatMessage("assistant", msg.get("content") or "", tool_call=tool_call),
            (int(doc.get("prompt_eval_count", 0)), int(doc.get("eval_count", 0))),
            doc.get("done_reason") or "stop",
        )
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise MalformedResponse(f"unexpected ollama chat payload: {exc!r}") from None


def _api_root(ref: ModelRef) -> str:
    root = ref.base_url.rstrip("/")
    if ref.provider == "openai_compat" and root.endswith("/v1"):
        root = root[: -len("/v1")]
    return root


# --- mock provider -------------------------------------------------------------------

ScriptEntry = Union[str, Mapping[str, Any], Callable[[ChatRequest], Any]]


def response_from_entry(entry: Any, req: ChatRequest | None = None) -> ChatResponse:
    """Turn a script entry into a response.

    Entries are plain text, ``{"content": ...}``, ``{"tool": name, "args": {...}}``
    (a structured tool call), or a callable receiving the request and
    returning any of those.
    """
    if callable(entry):
        entry = entry(req)
    if isinstance(entry, ChatResponse):
        return entry
    if isinstance(entry, str):
        content, tool_call = entry, None
    elif isinstance(entry, Mapping):
        content = entry.get("content", "")
        tool_call = ToolCall(entry["tool"], dict(entry.get("args", {}))) if "tool" in entry else None
    else:
        raise MalformedResponse(f"unsupported mock script entry {entry!r}")
    prompt_tokens = sum(len(m.content.split()) for m in req.messages) if req else 0
    return ChatResponse(
        ChatMessage("assistant", content, tool_call=tool_call),
        (prompt_tokens, len(content.split())),
        "tool_calls" if tool_call else "stop",
    )


class ScriptedProvider:
    """Deterministic replay of canned responses.

    ``script`` is either one list consumed in call order by every model, or a
    mapping of model name to list (key ``"*"`` catches models without their
    own queue).
    """

    def __init__(self, script: Sequence[ScriptEntry] | Mapping[str, Sequence[ScriptEntry]]):
        if isinstance(script, Mapping):
            self._queues = {name: list(entries) for name, entries in script.items()}
            self._shared = False
        else:
            self._queues = {"*": list(script)}
            self._shared = True
        self._cursor = {name: 0 for name in self._queues}
        self._lock = threading.Lock()

    def _queue_for(self, model: str) -> str:
        if self._shared:
            return "*"
        if model in self._queues:
            return model
        if "*" in self._queues:
            return "*"
        raise ScriptExhausted(f"no mock script queue for model {model!r}")

    def next(self, req: ChatRequest) -> ChatResponse:
        with self._lock:
            name = self._queue_for(req.model.model)
            pos = self._cursor[name]
            queue = self._queues[name]
            if pos >= len(queue):
                raise ScriptExhausted(f"mock script {name!r} exhausted after {pos} responses")
            self._cursor[name] = pos + 1
            entry = queue[pos]
        return response_from_entry(entry, req)

    @property
    def consumed(self) -> int:
        return sum(self._cursor.values())

    def cursor(self) -> dict[str, int]:
        return dict(self._cursor)

    def restore(self, cursor: Mapping[str, int]) -> None:
        with self._lock:
            for name, pos in cursor.items():
                if name not in self._cursor:
                    raise ValueError(f"cursor names unknown queue {name!r}")
                self._cursor[name] = int(pos)

    @classmethod
    def from_document(cls, doc: Any) -> ScriptedProvider:
        if isinstance(doc, Mapping) and "responses" in doc:
            doc = doc["responses"]
        if not isinstance(doc, (list, Mapping)):
            raise ValueError("mock script must be a list or a mapping of model name to list")
        return cls(doc)


def _unit_hash_vector(seed: str, dim: int) -> list[float]:
    raw = hashlib.shake_256(seed.encode("utf-8")).digest(4 * dim)
    words = struct.unpack(f">{dim}I", raw)
    return [w / 2**31 - 1.0 for w in words]


def mock_embedding(text: str, dim: int = MOCK_EMBED_DIM) -> list[float]:
    """Deterministic unit vector for ``text``.

    SHAKE-256 of the text is expanded into ``dim`` uniform components in
    [-1, 1) and L2-normalized. Text of the form ``"<ns>::<rest>"`` adds a
    shared component derived from ``<ns>`` so texts in one namespace cluster
    together: ``v = h("ns:" + ns) + 0.35 * h("text:" + text)``.
    """
    vec = _unit_hash_vector("text:" + text, dim)
    ns, sep, _ = text.partition(NAMESPACE_SEP)
    if sep and ns:
        base = _unit_hash_vector("ns:" + ns, dim)
        vec = [b + NAMESPACE_MIX * v for b, v in zip(base, vec)]
    norm = math.sqrt(sum(v * v for v in vec))
    return [v / norm for v in vec]


# --- gateway ----------------------------------------------------------------------


class ModelGateway:
    """Dispatches chat and embedding calls by provider.

    Network calls retry up to ``max_retries`` times on 429, 5xx and
    transport timeouts, sleeping ``backoff * 2**attempt`` seconds between
    attempts. Other 4xx responses fail immediately.
    """

    def __init__(
        self,
        mock: ScriptedProvider | None = None,
        *,
        client: httpx.Client | None = None,
        max_retries: int = 3,
        backoff: float = 0.5,
        timeout: float = 60.0,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.mock = mock
        self._client = client
        self._timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff
        self.sleep = sleep

    @property
    def client(self) -> httpx.Client:
        if self._client is None:
            self._client = httpx.Client(timeout=self._timeout)
        return self._client

    def close(self) -> None:
        if self._client is not None:
            self._client.close()

    def _post(self, ref: ModelRef, path: str, body: Mapping[str, Any]) -> Any:
        url = _api_root(ref) + path
        headers = {"Content-Type": "application/json"}
        if ref.api_key:
            headers["Authorization"] = f"Bearer {ref.api_key}"
        attempt = 0
        while True:
            try:
                resp = self.client.post(url, json=body, headers=headers)
            except (httpx.TimeoutException, httpx.TransportError) as exc:
                if attempt >= self.max_retries:
                    raise ProviderError(None, f"{type(exc).__name__}: {exc}") from exc
                status = None
            else:
                if resp.status_code < 400:
                    try:
                        return resp.json()
                    except ValueError as exc:
                        raise MalformedResponse(f"non-JSON response from {url}") from exc
                status = resp.status_code
                if status not in RETRY_STATUSES or attempt >= self.max_retries:
                    raise ProviderError(status, resp.text)
            delay = self.backoff * 2**attempt
            log.warning("retrying %s after status=%s in %.2fs", url, status, delay)
            self.sleep(delay)
            attempt += 1

    def chat(self, req: ChatRequest) -> ChatResponse:
        if not req.messages:
            raise ValueError("chat request needs at least one message")
        ref = req.model
        with tracing.span("llm_call", ref.model, {"provider": ref.provider}) as sp:
            if ref.provider == "mock":
                if self.mock is None:
                    raise ScriptExhausted("no mock script configured")
                resp = self.mock.next(req)
            elif ref.provider == "openai_compat":
                resp = parse_openai_chat(self._post(ref, "/v1/chat/completions", openai_chat_body(req)))
            else:
                resp = parse_ollama_chat(self._post(ref, "/api/chat", ollama_chat_body(req)))
            if sp is not None:
                sp.attributes.update(
                    finish_reason=resp.finish_reason,
                    prompt_tokens=str(resp.usage[0]),
                    completion_tokens=str(resp.usage[1]),
                )
        return resp

    def embed(self, ref: ModelRef, texts: Sequence[str]) -> list[list[float]]:
        if not texts or any(not t for t in texts):
            raise ValueError("embed needs a non-empty list of non-empty texts")
        with tracing.span("retrieval", "embed", {"provider": ref.provider, "model": ref.model, "count": len(texts)}):
            if ref.provider == "mock":
                vectors = [mock_embedding(t) for t in texts]
            elif ref.provider == "ollama":
                vectors = []
                for text in texts:
                    doc = self._post(ref, "/api/embeddings", {"model": ref.model, "prompt": text})
                    try:
                        vectors.append([float(x) for x in doc["embedding"]])
                    except (KeyError, TypeError, ValueError) as exc:
                        raise MalformedResponse(f"unexpected embeddings payload: {exc!r}") from None
            else:
                doc = self._post(ref, "/v1/embeddings", {"model": ref.model, "input": list(texts)})
                try:
                    rows = sorted(doc["data"], key=lambda r: r.get("index", 0))
                    vectors = [[float(x) for x in r["embedding"]] for r in rows]
                except (KeyError, TypeError, ValueError) as exc:
                    raise MalformedResponse(f"unexpected embeddings payload: {exc!r}") from None
                if len(vectors) != len(texts):
                    raise MalformedResponse(f"asked for {len(texts)} embeddings, got {len(vectors)}")
        dims = {len(v) for v in vectors}
        if len(dims) != 1:
            raise DimensionMismatch(f"embedding batch has mixed dimensions {sorted(dims)}")
        if not all(math.isfinite(x) for v in vectors for x in v) or 0 in dims:
            raise MalformedResponse("embedding contains non-finite values or is empty")
        return vectors


# --- tool-call extraction --------------------------------------------------------------

_FENCE = re.compile(r"```[ \t]*(?:json)?[ \t]*\n?(.*?)```", re.DOTALL | re.IGNORECASE)


def parse_tool_call(resp: ChatResponse, declared: Sequence[ToolSpec]) -> ToolCall | None:
    """Extract and validate a tool call from ``resp``.

    The structured ``tool_call`` field wins. Otherwise the reply text is
    scanned for a fenced JSON object with exactly the keys ``tool`` and
    ``args``; anything else counts as a plain-text answer.
    """
    call = resp.message.tool_call
    if call is None:
        call = _fenced_tool_call(resp.message.content)
        if call is None:
            return None
    tools = tool_index(declared)
    if call.name not in tools:
        raise UnknownTool(call.name)
    tools[call.name].validate_args(call.args)
    return call


def _fenced_tool_call(text: str) -> ToolCall | None:
    found = []
    for match in _FENCE.finditer(text or ""):
        try:
            obj = json.loads(match.group(1))
        except ValueError:
            continue
        if isinstance(obj, dict) and set(obj) == {"tool", "args"} and isinstance(obj["tool"], str):
            if isinstance(obj["args"], dict) and obj["tool"]:
                found.append(ToolCall(obj["tool"], obj["args"]))
    return found[0] if len(found) == 1 else None
