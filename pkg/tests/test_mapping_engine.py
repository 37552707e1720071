import random

import pytest

from oracles import brute_force_traversal, is_walk, random_graph, random_s2rs
from s2rqa.execution_model import ExecutionGraph, GuiComponent, InteractionEdge, ScreenNode
from s2rqa.llm_gateway import Gateway, ModelConfig
from s2rqa.mapping_engine import (
    StepMapping,
    TraversalError,
    fill_gap,
    label_for,
    map_on_screen,
    traverse,
)
from s2rqa.report_ingest import load_report
from s2rqa.s2r_pipeline import IndividualS2R, extract_steps


def s2r(action, obj, i=0, prep=None, obj2=None):
    return IndividualS2R(i, action, obj, prep, obj2, i)


def node_of(g, activity):
    return next(n for n in g.nodes.values() if n.activity_name == activity)


@pytest.fixture
def interval_steps(fixtures_dir):
    r = load_report(fixtures_dir / "reports" / "mileage-intervals.json")
    return extract_steps(r, Gateway(ModelConfig()))


def test_label_for():
    assert [label_for([]), label_for([1]), label_for([1, 2])] == ["VM", "CS", "AS"]


def test_step_mapping_rejects_wrong_label():
    with pytest.raises(ValueError):
        StepMapping(0, "CS", [])


def test_map_on_screen_single(mileage_graph, gateway):
    n = node_of(mileage_graph, "ServiceIntervalsListActivity")
    got = map_on_screen(s2r("Tap", "Add Service Interval"), n, mileage_graph, gateway)
    assert [e.edge_id for e in got] == [8]


def test_map_on_screen_ambiguous(mileage_graph, gateway):
    n = node_of(mileage_graph, "ServiceIntervalActivity")
    got = map_on_screen(s2r("entered", "the information", prep="for", obj2="my next oil change"), n, mileage_graph, gateway)
    assert [e.edge_id for e in got] == [9, 10, 11]


def test_map_on_screen_none(mileage_graph, gateway):
    for n in mileage_graph.nodes.values():
        assert map_on_screen(s2r("Change", "the phone setting"), n, mileage_graph, gateway) == []


def test_map_on_screen_skips_gateway_without_interactions(gateway):
    g = ExecutionGraph("a", {"start": ScreenNode("start", None, (), True)}, [])
    assert map_on_screen(s2r("Tap", "Save"), g.node("start"), g, gateway) == []
    assert sum(gateway.call_counts.values()) == 0


def test_intervals_labels_and_gaps(mileage_graph, interval_steps, gateway):
    res = traverse(mileage_graph, interval_steps, gateway)
    assert [m.label for m in res.step_mappings] == ["VM", "CS", "CS", "CS", "AS", "AS"]
    assert [[e.edge_id for e in m.gap_edges_before] for m in res.step_mappings] == [[], [], [2], [], [], [2]]
    assert [e.edge_id for e in res.path] == [0, 2, 5, 8, 9, 2, 4]
    assert res.mapped_count == 5
    assert is_walk(mileage_graph, res.path)


def test_intervals_agrees_with_brute_force(mileage_graph, interval_steps, gateway):
    res = traverse(mileage_graph, interval_steps, gateway)
    mapped, length, ids = brute_force_traversal(mileage_graph, interval_steps)
    assert (res.mapped_count, len(res.path), [e.edge_id for e in res.path]) == (mapped, length, ids)


def test_empty_s2r_list(mileage_graph, gateway):
    res = traverse(mileage_graph, [], gateway)
    assert res.path == [] and res.step_mappings == [] and res.mapped_count == 0
    assert sum(gateway.call_counts.values()) == 0


def test_all_vm_gives_empty_path(mileage_graph, gateway):
    steps = [s2r("Change", "the phone setting", 0), s2r("Rotate", "the device", 1)]
    res = traverse(mileage_graph, steps, gateway)
    assert [m.label for m in res.step_mappings] == ["VM", "VM"]
    assert res.path == []


def test_empty_graph_raises(gateway):
    with pytest.raises(TraversalError):
        traverse(ExecutionGraph("a", {}, []), [s2r("Tap", "Save")], gateway)


def test_deterministic(mileage_graph, interval_steps):
    runs = []
    for _ in range(3):
        res = traverse(mileage_graph, interval_steps, Gateway(ModelConfig()), verbose=True)
        runs.append(([e.edge_id for e in res.path], [m.label for m in res.step_mappings], res.trace))
    assert runs[0] == runs[1] == runs[2]


def test_verbose_trace_lines(mileage_graph, interval_steps, gateway):
    res = traverse(mileage_graph, interval_steps, gateway, verbose=True)
    assert any(line.startswith("visit node=") for line in res.trace)
    assert sum(line.startswith("step ") for line in res.trace) == len(interval_steps)
    quiet = traverse(mileage_graph, interval_steps, Gateway(ModelConfig()))
    assert quiet.trace == []


def test_fill_gap(mileage_graph):
    main = node_of(mileage_graph, "ServiceIntervalActivity")
    assert fill_gap(mileage_graph, main.node_id, main.node_id) == []
    launch = mileage_graph.outgoing("start")[0].target
    lists = node_of(mileage_graph, "ServiceIntervalsListActivity").node_id
    assert [e.edge_id for e in fill_gap(mileage_graph, launch, lists)] == [2, 5]


def test_fill_gap_unreachable():
    nodes = {"start": ScreenNode("start", None, (), True), "a": ScreenNode("a"), "b": ScreenNode("b")}
    edges = [InteractionEdge(0, "start", "a", "open_app", GuiComponent("app")),
             InteractionEdge(1, "start", "b", "open_app", GuiComponent("app", "x"))]
    g = ExecutionGraph("x", nodes, edges)
    assert fill_gap(g, "a", "b") is None


def test_gateway_call_bound(mileage_graph, interval_steps, gateway):
    res = traverse(mileage_graph, interval_steps, gateway)
    calls = gateway.call_counts["map_gate"] + gateway.call_counts["map_list"]
    assert calls == res.stats.gateway_calls
    assert calls <= 2 * len(mileage_graph.nodes) * len(interval_steps)
    assert res.stats.pairs_visited <= len(mileage_graph.nodes) * len(interval_steps)


def test_matches_brute_force_on_random_graphs():
    for seed in range(60):
        rng = random.Random(seed)
        g = random_graph(rng)
        steps = random_s2rs(rng)
        res = traverse(g, steps, Gateway(ModelConfig()))
        assert (res.mapped_count, len(res.path), [e.edge_id for e in res.path]) == brute_force_traversal(g, steps)


def test_dropped_ids_reported(mileage_graph):
    class Liar:
        name = "liar"

        def respond(self, template, bindings, prompt):
            return "yes" if template.task == "map_gate" else "99"

    gw = Gateway(ModelConfig(), Liar())
    res = traverse(mileage_graph, [s2r("Tap", "Save")], gw)
    assert res.step_mappings[0].label == "VM"
    assert any("99" in d for d in res.diagnostics)
