"""Independent reference implementations used to check the package.

Nothing here calls the traversal, shortest-path or scoring code under test.
"""

from __future__ import annotations

import hashlib
import json

import networkx as nx

from s2rqa.execution_model import ExecutionGraph, GuiComponent, InteractionEdge, ScreenNode
from s2rqa.llm_gateway import mock_match_score
from s2rqa.quality_report import AnnotatedStep, QualityReport
from s2rqa.evaluation import GroundTruth, TruthStep
from s2rqa.s2r_pipeline import IndividualS2R

VOCAB = ["save", "menu", "title", "odometer", "list", "add", "settings", "back", "service", "name"]
EDGE_ACTIONS = ["tap", "long_tap", "type", "swipe"]
# acceptance outcomes, filled by test_acceptance.py and printed by conftest
ACCEPTANCE: dict[int, tuple[bool, str]] = {}

S2R_VERBS = ["tap", "click", "type", "enter", "open", "swipe", "navigate", "change", "long press", "select"]


# --- random graphs ----------------------------------------------------------

def _component(rng, kind: str) -> GuiComponent:
    words = rng.sample(VOCAB, rng.randint(1, 2))
    rid = f"app:id/{rng.choice(VOCAB)}" if rng.random() < 0.4 else None
    desc = " ".join(rng.sample(VOCAB, 2)) if rng.random() < 0.3 else None
    return GuiComponent(kind, rid, " ".join(words), desc, rng.randint(0, 3))


def random_graph(rng, max_nodes: int = 8, max_edges: int = 14) -> ExecutionGraph:
    """Connected random graph; edge ids are a random permutation."""
    n = rng.randint(1, max_nodes - 1)
    ids = [f"n{i}" for i in range(n)]
    nodes = {"start": ScreenNode("start", None, (), True)}
    for i, nid in enumerate(ids):
        nodes[nid] = ScreenNode(nid, f"Screen{i}", (GuiComponent("View", f"app:id/root{i}"),))
    specs: list[tuple] = []
    keys: set = set()

    def add(src, tgt, action, comp) -> None:
        key = (src, tgt, action, comp.identity())
        if key not in keys:
            keys.add(key)
            specs.append((src, tgt, action, comp))

    add("start", ids[0], "open_app", _component(rng, "app"))
    for i in range(1, n):
        parent = rng.choice(ids[:i])
        add(parent, ids[i], rng.choice(EDGE_ACTIONS), _component(rng, rng.choice(["Button", "EditText"])))
    target = rng.randint(len(specs), max(len(specs), max_edges))
    attempts = 0
    while len(specs) < target and attempts < 200:
        attempts += 1
        if rng.random() < 0.1:
            add("start", rng.choice(ids), "open_app", _component(rng, "app"))
        else:
            add(rng.choice(ids), rng.choice(ids), rng.choice(EDGE_ACTIONS),
                _component(rng, rng.choice(["Button", "EditText", "TextView"])))
    order = list(range(len(specs)))
    rng.shuffle(order)
    edges = [InteractionEdge(order[k], *spec, typed_text="x" if spec[2] == "type" else None)
             for k, spec in enumerate(specs)]
    return ExecutionGraph("app.test", nodes, edges)


def random_s2rs(rng, max_steps: int = 3) -> list[IndividualS2R]:
    steps = []
    for i in range(rng.randint(0, max_steps)):
        obj = " ".join(rng.sample(VOCAB + ["phone", "screen"], rng.randint(1, 2)))
        if rng.random() < 0.25:
            steps.append(IndividualS2R(i, rng.choice(S2R_VERBS), obj, "on", rng.choice(VOCAB), i))
        else:
            steps.append(IndividualS2R(i, rng.choice(S2R_VERBS), obj, None, None, i))
    return steps


# --- graph oracles ----------------------------------------------------------

def bfs_distance(g: ExecutionGraph, a: str, b: str) -> int | None:
    """Hop distance using networkx."""
    G = nx.MultiDiGraph()
    G.add_nodes_from(g.nodes)
    G.add_edges_from((e.source, e.target) for e in g.edges)
    try:
        return nx.shortest_path_length(G, a, b)
    except nx.NetworkXNoPath:
        return None


def raw_screen_key(components: list) -> str:
    """Hash-set key of a raw trace screen, read straight from the JSON."""
    rows = []

    def walk(comp, depth, idx):
        rows.append((depth, comp["type"], comp.get("id") or "", idx))
        for j, child in enumerate(comp.get("children", [])):
            walk(child, depth + 1, j)

    for i, c in enumerate(components):
        walk(c, 0, i)
    return hashlib.md5(repr(rows).encode()).hexdigest()


def count_unique_screens(trace_paths) -> int:
    seen = set()
    for p in trace_paths:
        with open(p, encoding="utf-8") as fh:
            doc = json.load(fh)
        for step in doc["steps"]:
            seen.add(raw_screen_key(step["screen"]["components"]))
    return len(seen)


def brute_force_traversal(g: ExecutionGraph, s2rs: list[IndividualS2R], threshold: float = 0.5):
    """Best (mapped, length, edge ids) over walks built from simple-path segments.

    Every S2R is either skipped or mapped by some edge whose source is
    reached through any simple path from the current node. Scores every
    complete combination; no memoization, no shortest-path shortcut.
    """
    out: dict[str, list[InteractionEdge]] = {n: [] for n in g.nodes}
    for e in sorted(g.edges, key=lambda e: e.edge_id):
        out[e.source].append(e)
    maps = {(i, e.edge_id): mock_match_score(s.formatted(), e) >= threshold
            for i, s in enumerate(s2rs) for e in g.edges}

    def simple_paths(start):
        stack = [(start, (), frozenset([start]))]
        while stack:
            node, path, seen = stack.pop()
            yield node, path
            for e in out[node]:
                if e.target not in seen:
                    stack.append((e.target, path + (e.edge_id,), seen | {e.target}))

    best = [None]

    def consider(mapped, ids):
        key = (-mapped, len(ids), ids)
        if best[0] is None or key < best[0]:
            best[0] = key

    def rec(i, node, mapped, ids):
        if i == len(s2rs):
            consider(mapped, ids)
            return
        rec(i + 1, node, mapped, ids)
        for m, path in simple_paths(node):
            for e in out[m]:
                if maps[(i, e.edge_id)]:
                    rec(i + 1, e.target, mapped + 1, ids + path + (e.edge_id,))

    rec(0, g.start_id, 0, ())
    neg_mapped, length, ids = best[0]
    return -neg_mapped, length, list(ids)


def is_walk(g: ExecutionGraph, edges: list[InteractionEdge]) -> bool:
    cur = g.start_id
    for e in edges:
        if e.source != cur:
            return False
        cur = e.target
    return True


# --- metric corpora ---------------------------------------------------------

def annotation_corpus(rows: list[tuple[str | None, str | None]], ms_both: int, ms_pred_only: int,
                      ms_truth_only: int, n_reports: int = 21):
    """Predicted reports and truths from (truth label, predicted label) rows.

    ``None`` on one side means the step is absent there. MS flags are put on
    paired rows in order: first ``ms_both`` on both sides, then predicted
    only, then truth only.
    """
    paired = [k for k, (t, p) in enumerate(rows) if t and p]
    need = ms_both + ms_pred_only + ms_truth_only
    assert need <= len(paired), "not enough paired rows for the MS flags"
    flags = {}
    for n, k in enumerate(paired[:need]):
        flags[k] = (True, True) if n < ms_both else (True, False) if n < ms_both + ms_pred_only else (False, True)
    preds: dict[int, list] = {r: [] for r in range(n_reports)}
    truths: dict[int, list] = {r: [] for r in range(n_reports)}
    for k, (t, p) in enumerate(rows):
        r = k % n_reports
        text = f"step number {k} of report {r}"
        pf, tf = flags.get(k, (False, False))
        if p:
            preds[r].append((text, p, pf))
        if t:
            truths[r].append(TruthStep(text, t, tf))
    predicted, truth = [], []
    for r in range(n_reports):
        steps = []
        for text, label, flag in preds[r]:
            if flag:
                steps.append(AnnotatedStep("missing", "MS", "Tap on 'x'", [], len(steps)))
            steps.append(AnnotatedStep("reported", label, text, [], len(steps), has_missing_before=flag))
        predicted.append(QualityReport(f"r{r}", "app", steps))
        truth.append(GroundTruth(f"r{r}", "app", truths[r]))
    return predicted, truth


def rows_from_outcomes(outcomes: list[tuple[str | None, str | None, int]]) -> list:
    rows = []
    for t, p, n in outcomes:
        rows += [(t, p)] * n
    return rows
