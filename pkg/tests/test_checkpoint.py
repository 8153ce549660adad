import random

import pytest

from crewgraph.errors import CorruptCheckpoint, FingerprintMismatch, NotFound, StepBudgetExhausted
from crewgraph.graph import (
    END,
    ChannelSpec,
    Checkpoint,
    FileCheckpointStore,
    GraphBuilder,
    GraphState,
    MemoryCheckpointStore,
    RunConfig,
    invoke,
    load_checkpoint,
    resume,
    save_checkpoint,
)
from graph_oracles import build_from_spec, random_spec


def mail_graph(extra_node: bool = False):
    b = GraphBuilder("mail_graph", [ChannelSpec("mail", default=True), ChannelSpec("log", "append_list", default=[])])
    for name in ("check_new_emails", "compose", "wait"):
        b.add_node(name, lambda s, n=name: {"log": [n]})
    b.add_conditional_edge("check_new_emails", lambda s: "compose" if s["mail"] else "wait", {"compose", "wait"})
    b.add_edge("compose", "wait").add_edge("wait", END).set_entry("check_new_emails")
    if extra_node:
        b.edges.pop("wait")
        b.add_node("archive", lambda s: {"log": ["archive"]}).add_edge("wait", "archive").add_edge("archive", END)
    return b.compile()


def sample_checkpoint(step=2):
    state = GraphState({"t": "text", "n": 1.5, "b": True, "l": ["x", "y"], "blob": b"\x00\xff"})
    return Checkpoint("run-1", step, "compose", state, "f" * 64, {"mock_cursor": {"*": 3}})


@pytest.fixture(params=["memory", "file"])
def store(request, tmp_path):
    return MemoryCheckpointStore() if request.param == "memory" else FileCheckpointStore(tmp_path / "ckpt")


def test_save_load_round_trip(store):
    cp = sample_checkpoint()
    save_checkpoint(cp, store)
    assert load_checkpoint("run-1", store) == cp


def test_load_returns_highest_step(store):
    for step in (1, 10, 2):
        save_checkpoint(sample_checkpoint(step), store)
    assert load_checkpoint("run-1", store).step_index == 10
    assert load_checkpoint("run-1", store, step_index=2).step_index == 2


def test_load_unknown_run(store):
    with pytest.raises(NotFound):
        load_checkpoint("nope", store)


def test_file_layout(tmp_path):
    store = FileCheckpointStore(tmp_path)
    save_checkpoint(sample_checkpoint(4), store)
    assert (tmp_path / "run-1" / "4.ckpt").is_file()
    header = (tmp_path / "run-1" / "4.ckpt").read_bytes().split(b"\n", 1)[0]
    assert b'"fingerprint":"' + b"f" * 64 in header


def test_every_single_byte_flip_in_body_is_detected(tmp_path):
    store = FileCheckpointStore(tmp_path)
    save_checkpoint(sample_checkpoint(), store)
    path = tmp_path / "run-1" / "2.ckpt"
    original = path.read_bytes()
    body_start = original.index(b"\n") + 1
    for pos in range(body_start, len(original)):
        data = bytearray(original)
        data[pos] ^= 0x01
        path.write_bytes(bytes(data))
        with pytest.raises(CorruptCheckpoint):
            load_checkpoint("run-1", store)


def test_garbage_file_is_corrupt(tmp_path):
    store = FileCheckpointStore(tmp_path)
    (tmp_path / "r").mkdir()
    (tmp_path / "r" / "0.ckpt").write_bytes(b"hello")
    with pytest.raises(CorruptCheckpoint):
        load_checkpoint("r", store)


def test_resume_after_step_one_matches_uninterrupted():
    g = mail_graph()
    full, _ = invoke(g, {})
    store = MemoryCheckpointStore()
    invoke(g, {}, RunConfig(run_id="r", checkpoint_every=1), store=store)
    cp = load_checkpoint("r", store, step_index=1)
    assert cp.current_node == "check_new_emails"
    final, summary = resume(g, cp, RunConfig(run_id="r"))
    assert final == full
    assert summary.nodes == ["compose", "wait"]


def test_resume_rejects_changed_graph():
    store = MemoryCheckpointStore()
    invoke(mail_graph(), {}, RunConfig(run_id="r", checkpoint_every=1), store=store)
    with pytest.raises(FingerprintMismatch):
        resume(mail_graph(extra_node=True), load_checkpoint("r", store, 1))


def test_resume_at_end_runs_nothing():
    calls = []
    b = GraphBuilder("g", [ChannelSpec("v", default=0)])
    b.add_node("a", lambda s: calls.append(1) or {"v": s["v"] + 1}).add_edge("a", END).set_entry("a")
    g = b.compile()
    store = MemoryCheckpointStore()
    state, _ = invoke(g, {}, RunConfig(run_id="r", checkpoint_every=1), store=store)
    calls.clear()
    final, summary = resume(g, load_checkpoint("r", store))
    assert calls == [] and summary.steps == [] and final == state


def test_checkpoint_cadence_and_final_step():
    store = MemoryCheckpointStore()
    b = GraphBuilder()
    for i in range(5):
        b.add_node(f"n{i}", lambda s: {})
        b.add_edge(f"n{i}", f"n{i + 1}" if i < 4 else END)
    invoke(b.set_entry("n0").compile(), {}, RunConfig(run_id="r", checkpoint_every=2), store=store)
    assert store.steps("r") == [2, 4, 5]


def test_checkpoint_every_requires_store():
    with pytest.raises(ValueError):
        invoke(mail_graph(), {}, RunConfig(checkpoint_every=1))


def test_resume_equivalence_for_every_prefix_on_random_runs():
    rng = random.Random(21)
    checked = 0
    while checked < 40:
        spec = random_spec(rng)
        g = build_from_spec(spec)
        store = MemoryCheckpointStore()
        try:
            full, summary = invoke(g, {}, RunConfig(step_budget=20, run_id="r", checkpoint_every=1), store=store)
        except StepBudgetExhausted:
            continue
        for k in range(1, len(summary.steps) + 1):
            final, _ = resume(g, load_checkpoint("r", store, k), RunConfig(step_budget=20, run_id="r"))
            assert final.to_bytes() == full.to_bytes()
        checked += 1


def test_resume_counts_prior_steps_against_budget():
    b = GraphBuilder().add_node("a", lambda s: {}).add_node("b", lambda s: {})
    g = b.add_edge("a", "b").add_edge("b", "a").set_entry("a").compile()
    store = MemoryCheckpointStore()
    with pytest.raises(StepBudgetExhausted):
        invoke(g, {}, RunConfig(step_budget=4, run_id="r", checkpoint_every=1), store=store)
    with pytest.raises(StepBudgetExhausted) as exc:
        resume(g, load_checkpoint("r", store, 2), RunConfig(step_budget=4, run_id="r"))
    assert exc.value.steps == ["a", "b"]
