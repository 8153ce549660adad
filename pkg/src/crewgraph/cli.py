"""Command line: ``crewgraph validate|run|resume CONFIG``.

Exit codes: 0 ok, 1 usage/config/checkpoint problems, 2 workflow error,
3 step budget exhausted. Reports go to stdout as tab-delimited rows.
"""

from __future__ import annotations

import argparse
import json
import sys
import uuid
from pathlib import Path

from .config import WorkflowConfig, build_workflow, load_config, load_mock_provider, summarize
from .errors import (
    CheckpointError,
    ConfigError,
    CorruptIndex,
    CrewGraphError,
    FingerprintMismatch,
    StepBudgetExhausted,
)
from .gateway import ModelGateway
from .graph import FileCheckpointStore, GraphState, RunConfig, invoke, load_checkpoint, resume
from .graph.state import canonical_json
from .trace import SystemClock, TickClock, TraceSink

EXIT_OK, EXIT_USAGE, EXIT_WORKFLOW, EXIT_BUDGET = 0, 1, 2, 3
DETERMINISTIC_RUN_ID = "deterministic"


def _emit(*fields: object) -> None:
    print("\t".join(str(f) for f in fields))


def _fail(message: str, code: int = EXIT_USAGE) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _load(path: str) -> WorkflowConfig:
    return load_config(path)


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        cfg = _load(args.config)
        provider = load_mock_provider(cfg)
        graph, _ = build_workflow(cfg, ModelGateway(provider))
    except FileNotFoundError as exc:
        return _fail(f"config not found: {exc.filename}")
    except (ConfigError, CorruptIndex) as exc:
        return _fail(str(exc))
    except (CrewGraphError, ValueError, KeyError) as exc:
        return _fail(f"{args.config}: {exc}")
    _emit("workflow", cfg.workflow)
    for row in summarize(graph):
        _emit(*row)
    if args.figure:
        from .plotting import plot_graph

        plot_graph(graph, args.figure)
        _emit("figure", args.figure)
    _emit("status", "valid")
    return EXIT_OK


def _execute(args: argparse.Namespace, resuming: bool) -> int:
    try:
        cfg = _load(args.config)
        provider = load_mock_provider(cfg)
    except FileNotFoundError as exc:
        return _fail(f"config not found: {exc.filename}")
    except ConfigError as exc:
        return _fail(str(exc))

    clock = TickClock() if args.deterministic else SystemClock()
    gateway = ModelGateway(provider)
    try:
        graph, initial = build_workflow(cfg, gateway, clock)
    except (CrewGraphError, ValueError, KeyError) as exc:
        return _fail(f"{args.config}: {exc}")

    run_id = args.run_id or (DETERMINISTIC_RUN_ID if args.deterministic else uuid.uuid4().hex[:12])
    ckpt_dir = args.checkpoint_dir or cfg.path("checkpoints")
    store = FileCheckpointStore(ckpt_dir) if ckpt_dir else None
    every = cfg.run.get("checkpoint_every", 1) if store else None
    budget = args.step_budget or cfg.run.get("step_budget", 50)
    run_cfg = RunConfig(step_budget=budget, run_id=run_id, checkpoint_every=every)
    trace_out = args.trace_out or cfg.path("trace_out")
    sink = TraceSink(clock)

    def meta() -> dict:
        return {"mock_cursor": provider.cursor()} if provider else {}

    cp = None
    if resuming:
        if store is None:
            return _fail("resume needs --checkpoint-dir or paths.checkpoints in the config")
        try:
            cp = load_checkpoint(run_id, store)
        except CheckpointError as exc:
            return _fail(str(exc))
        if cp.graph_fingerprint != graph.fingerprint:
            return _fail(
                f"checkpoint for run {run_id!r} was taken on a different graph "
                f"(checkpoint {cp.graph_fingerprint[:12]}, config {graph.fingerprint[:12]}); "
                "the workflow definition changed since the run started, so it cannot be resumed"
            )
        if provider is not None and "mock_cursor" in cp.meta:
            provider.restore(cp.meta["mock_cursor"])

    state: GraphState | None = None
    code = EXIT_OK
    try:
        if cp is not None:
            state, summary = resume(graph, cp, run_cfg, sink, store=store, checkpoint_meta=meta)
        else:
            state, summary = invoke(graph, initial, run_cfg, sink, store=store, checkpoint_meta=meta)
        if summary.resumed_from is not None:
            _emit("resumed_from", summary.resumed_from)
        for step in summary.steps:
            _emit("step", step.index, step.node, step.next)
        _emit("status", "ok")
    except StepBudgetExhausted as exc:
        state = exc.state
        print(f"error: {exc}", file=sys.stderr)
        _emit("status", "budget_exhausted")
        code = EXIT_BUDGET
    except FingerprintMismatch as exc:
        return _fail(str(exc))
    except CrewGraphError as exc:
        state = getattr(exc, "state", None)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        _emit("status", "failed")
        code = EXIT_WORKFLOW
    finally:
        gateway.close()
        if trace_out:
            sink.export_jsonl(trace_out)
    if trace_out:
        _emit("trace", trace_out)
    if state is not None:
        for key in ("outcome", "category", "next_run_at"):
            if state.get(key):
                _emit(key, state[key])
        if args.state_out:
            Path(args.state_out).write_bytes(canonical_json(state.to_canonical()) + b"\n")
    if args.figure and sink.runs:
        from .plotting import plot_timeline

        plot_timeline(next(iter(sink.runs.values())), args.figure)
        _emit("figure", args.figure)
    _emit("run_id", run_id)
    return code


def cmd_run(args: argparse.Namespace) -> int:
    return _execute(args, resuming=False)


def cmd_resume(args: argparse.Namespace) -> int:
    return _execute(args, resuming=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crewgraph", description="Run graph workflows of agent crews.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="schema-check a config and compile its workflow graph")
    p.add_argument("config")
    p.add_argument("--figure", help="write a drawing of the workflow graph to this file")
    p.set_defaults(func=cmd_validate)

    for name, func, helptext in (
        ("run", cmd_run, "execute the configured workflow"),
        ("resume", cmd_resume, "continue a run from its latest checkpoint"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config")
        p.add_argument("--run-id", required=name == "resume")
        p.add_argument("--trace-out", help="write the run trace as JSONL")
        p.add_argument("--checkpoint-dir", help="directory for checkpoints (overrides paths.checkpoints)")
        p.add_argument("--deterministic", action="store_true", help="freeze the clock for reproducible artifacts")
        p.add_argument("--state-out", help="write the final graph state as canonical JSON")
        p.add_argument("--step-budget", type=int, help="override the step budget")
        p.add_argument("--figure", help="write a span timeline of the run to this file")
        p.set_defaults(func=func)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if getattr(args, "step_budget", None) is not None and args.step_budget < 1:
        return _fail("--step-budget must be >= 1")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
