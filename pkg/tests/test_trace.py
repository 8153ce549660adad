import json

import pytest

from crewgraph import trace as tracing
from crewgraph.errors import DuplicateRun, NodeFailed, RunAlreadyFinished, TraceError
from crewgraph.graph import END, GraphBuilder, RunConfig, invoke
from crewgraph.trace import Span, TickClock, TraceSink

RUN_KEYS = ["type", "run_id", "workflow", "status", "started", "finished", "span_count"]
SPAN_KEYS = ["type", "run_id", "span_id", "parent_span_id", "kind", "name", "started", "finished", "attributes", "error"]


def test_tick_clock():
    clock = TickClock(start=100.0, step_us=500)
    assert [clock.now(), clock.now()] == [100.0, 100.0005]


def test_duplicate_run_id():
    sink = TraceSink(TickClock())
    sink.start_run("w", "r1")
    with pytest.raises(DuplicateRun):
        sink.start_run("w", "r1")


def test_record_after_finish():
    sink = TraceSink(TickClock())
    run = sink.start_run("w", "r1")
    sink.finish_run(run, "ok")
    with pytest.raises(RunAlreadyFinished):
        sink.record_span(run, Span("s1", "r1", "llm_call", "x", 0.0))
    with pytest.raises(RunAlreadyFinished):
        sink.finish_run(run, "failed")


def test_invalid_kind_status_and_parent():
    sink = TraceSink(TickClock())
    run = sink.start_run("w", "r1")
    with pytest.raises(TraceError):
        sink.record_span(run, Span("s1", "r1", "thinking", "x", 0.0))
    with pytest.raises(TraceError):
        sink.record_span(run, Span("s1", "r1", "llm_call", "x", 0.0, parent_span_id="s9"))
    with pytest.raises(TraceError):
        sink.finish_run(run, "running")


def test_span_is_noop_without_active_run():
    with tracing.span("llm_call", "x") as s:
        assert s is None


def test_nesting_follows_context():
    sink = TraceSink(TickClock())
    run = sink.start_run("w", "r1")
    with tracing.activate(run):
        with tracing.span("graph_node", "a"):
            with tracing.span("crew_task", "t", {"agent": "Writer", "n": 3}):
                with tracing.span("llm_call", "m"):
                    pass
            with tracing.span("tool_call", "lookup"):
                pass
        with tracing.span("graph_node", "b"):
            pass
    parents = {s.name: s.parent_span_id for s in run.spans}
    assert parents == {"a": None, "t": "s0001", "m": "s0002", "lookup": "s0001", "b": None}
    assert run.spans[1].attributes == {"agent": "Writer", "n": "3"}
    assert all(s.finished > s.started for s in run.spans)


def test_span_records_error():
    sink = TraceSink(TickClock())
    run = sink.start_run("w", "r1")
    with tracing.activate(run), pytest.raises(KeyError):
        with tracing.span("tool_call", "boom"):
            raise KeyError("missing")
    assert run.spans[0].error == "KeyError: 'missing'"


def two_node_graph(fail=False):
    b = GraphBuilder("demo")
    b.add_node("a", lambda s: {})
    b.add_node("b", (lambda s: 1 / 0) if fail else (lambda s: {}))
    return b.add_edge("a", "b").add_edge("b", END).set_entry("a").compile()


def test_export_shape(tmp_path):
    sink = TraceSink(TickClock())
    invoke(two_node_graph(), {}, RunConfig(run_id="r1"), sink)
    invoke(two_node_graph(), {}, RunConfig(run_id="r2"), sink)
    path = tmp_path / "t.jsonl"
    sink.export_jsonl(path)
    lines = [json.loads(x) for x in path.read_text().splitlines()]
    assert len(lines) == 6
    assert [x["type"] for x in lines] == ["run", "run", "span", "span", "span", "span"]
    assert list(lines[0]) == RUN_KEYS and list(lines[2]) == SPAN_KEYS
    assert lines[0] == {
        "type": "run",
        "run_id": "r1",
        "workflow": "demo",
        "status": "ok",
        "started": "2024-01-01T00:00:00.000000+00:00",
        "finished": "2024-01-01T00:00:00.005000+00:00",
        "span_count": 2,
    }
    assert [(x["run_id"], x["name"], x["kind"]) for x in lines[2:]] == [
        ("r1", "a", "graph_node"),
        ("r1", "b", "graph_node"),
        ("r2", "a", "graph_node"),
        ("r2", "b", "graph_node"),
    ]


def test_reexport_is_byte_identical(tmp_path):
    sink = TraceSink(TickClock())
    invoke(two_node_graph(), {}, RunConfig(run_id="r1"), sink)
    sink.export_jsonl(tmp_path / "1.jsonl")
    sink.export_jsonl(tmp_path / "2.jsonl")
    assert (tmp_path / "1.jsonl").read_bytes() == (tmp_path / "2.jsonl").read_bytes()


def test_identical_runs_trace_identically(tmp_path):
    for name in ("1", "2"):
        sink = TraceSink(TickClock())
        invoke(two_node_graph(), {}, RunConfig(run_id="r"), sink)
        sink.export_jsonl(tmp_path / f"{name}.jsonl")
    assert (tmp_path / "1.jsonl").read_bytes() == (tmp_path / "2.jsonl").read_bytes()


def test_failed_run():
    sink = TraceSink(TickClock())
    with pytest.raises(NodeFailed):
        invoke(two_node_graph(fail=True), {}, RunConfig(run_id="r"), sink)
    run = sink.runs["r"]
    assert run.status == "failed"
    assert run.spans[-1].name == "b"
    assert run.spans[-1].error == "NodeFailed: node 'b' failed: ZeroDivisionError: division by zero"


def test_export_to_bad_path(tmp_path):
    with pytest.raises(TraceError):
        TraceSink().export_jsonl(tmp_path / "missing" / "t.jsonl")
