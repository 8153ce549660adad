"""Figures for the CLI report path: graph topology and span timelines."""

from __future__ import annotations

import os
from collections import deque

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.patches import FancyArrowPatch  # noqa: E402

from .graph import END, CompiledGraph  # noqa: E402
from .trace import RunTrace  # noqa: E402

KIND_COLORS = {
    "graph_node": "#4c72b0",
    "crew_task": "#55a868",
    "llm_call": "#c44e52",
    "tool_call": "#8172b2",
    "retrieval": "#ccb974",
}

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}


def _layers(graph: CompiledGraph) -> dict[str, int]:
    """BFS depth from the entry; END sits one layer below the deepest node."""
    depth = {graph.entry: 0}
    queue = deque([graph.entry])
    while queue:
        node = queue.popleft()
        for nxt in sorted(graph.successors(node)):
            if nxt != END and nxt not in depth:
                depth[nxt] = depth[node] + 1
                queue.append(nxt)
    depth[END] = max(depth.values()) + 1
    return depth


def plot_graph(graph: CompiledGraph, path: str | os.PathLike) -> None:
    """Draw the workflow top to bottom: solid arrows are plain edges, dashed ones conditional."""
    depth = _layers(graph)
    rows: dict[int, list[str]] = {}
    for name in [*graph.nodes, END]:
        rows.setdefault(depth[name], []).append(name)
    pos = {}
    for level, names in rows.items():
        for i, name in enumerate(names):
            pos[name] = (i - (len(names) - 1) / 2, -level)

    with plt.rc_context(STYLE):
        width = max(4.0, 2.2 * max(len(v) for v in rows.values()))
        fig, ax = plt.subplots(figsize=(width, 1.4 * len(rows) + 0.6))
        for source in graph.nodes:
            conditional = source in graph.conditional_edges
            for target in sorted(graph.successors(source)):
                (x0, y0), (x1, y1) = pos[source], pos[target]
                rad = 0.0
                if y1 >= y0:
                    rad = -0.5  # back edge
                ax.add_patch(
                    FancyArrowPatch(
                        (x0, y0),
                        (x1, y1),
                        arrowstyle="-|>",
                        mutation_scale=12,
                        shrinkA=18,
                        shrinkB=18,
                        linestyle="--" if conditional else "-",
                        connectionstyle=f"arc3,rad={rad}",
                        color="0.3",
                    )
                )
        for name, (x, y) in pos.items():
            face = "0.85" if name == END else ("#dbe7f4" if name != graph.entry else "#f4e3c4")
            ax.text(x, y, name, ha="center", va="center", bbox=dict(boxstyle="round,pad=0.4", fc=face, ec="0.3"))
        xs = [p[0] for p in pos.values()]
        ys = [p[1] for p in pos.values()]
        ax.set_xlim(min(xs) - 1, max(xs) + 1)
        ax.set_ylim(min(ys) - 0.6, max(ys) + 0.6)
        ax.set_axis_off()
        ax.set_title(f"{graph.name} ({graph.fingerprint[:10]})")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def plot_timeline(run: RunTrace, path: str | os.PathLike) -> None:
    """Gantt-style chart of a run's spans, one row per span, colored by kind."""
    spans = run.spans
    t0 = run.started
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(7.0, 0.28 * max(len(spans), 1) + 1.2))
        depth: dict[str, int] = {}
        for row, s in enumerate(spans):
            depth[s.span_id] = depth.get(s.parent_span_id, -1) + 1 if s.parent_span_id else 0
            end = s.finished if s.finished is not None else s.started
            ax.barh(
                row,
                max((end - s.started) * 1000, 1e-3),
                left=(s.started - t0) * 1000,
                color=KIND_COLORS.get(s.kind, "0.5"),
                edgecolor="black" if s.error else "none",
                height=0.7,
            )
        ax.set_yticks(range(len(spans)))
        ax.set_yticklabels([f"{s.name} {'·' * depth[s.span_id]}".rstrip() for s in spans])
        ax.invert_yaxis()
        ax.set_xlabel("ms since run start")
        ax.set_title(f"run {run.run_id} [{run.status}]")
        handles = [plt.Rectangle((0, 0), 1, 1, color=c) for c in KIND_COLORS.values()]
        ax.legend(handles, list(KIND_COLORS), loc="upper left", bbox_to_anchor=(1.01, 1.0), fontsize=7, frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
