"""Mapping individual S2Rs onto the execution graph.

The traversal searches, from the start node, for the reproduction walk that
maps the most S2Rs. Each S2R is either skipped (vocabulary mismatch, the
walk stays put) or mapped on some screen reachable from the current one; in
that case the shortest connecting path becomes the missing steps in front of
it. Candidates are ranked by (most mapped, shortest walk, smallest edge-id
sequence). Screen-level answers are cached per (node, S2R) pair, so every
pair costs at most one gate and one list call.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

from .execution_model import ExecutionGraph, InteractionEdge, ScreenNode, shortest_path
from .llm_gateway import Gateway
from .s2r_pipeline import IndividualS2R

log = logging.getLogger(__name__)

CS, AS, VM, MS = "CS", "AS", "VM", "MS"


class TraversalError(ValueError):
    pass


@dataclass
class StepMapping:
    s2r_index: int
    label: str
    mapped_edges: list[InteractionEdge] = field(default_factory=list)
    gap_edges_before: list[InteractionEdge] = field(default_factory=list)
    # the mapped edge the walk actually takes (one of mapped_edges)
    path_edge: InteractionEdge | None = None

    def __post_init__(self) -> None:
        n = len(self.mapped_edges)
        expected = VM if n == 0 else CS if n == 1 else AS
        if self.label != expected:
            raise ValueError(f"label {self.label} does not fit {n} mapped edges")


@dataclass
class TraversalStats:
    nodes_visited: int = 0
    pairs_visited: int = 0
    gateway_calls: int = 0


@dataclass
class TraversalResult:
    path: list[InteractionEdge]
    step_mappings: list[StepMapping]
    mapped_count: int
    stats: TraversalStats
    diagnostics: list[str] = field(default_factory=list)
    trace: list[str] = field(default_factory=list)


def label_for(edges: list) -> str:
    return VM if not edges else CS if len(edges) == 1 else AS


def map_on_screen(s2r: IndividualS2R, node: ScreenNode, g: ExecutionGraph, gateway: Gateway,
                  diagnostics: list[str] | None = None) -> list[InteractionEdge]:
    """Two-step mapping: a yes/no gate, then the list of matching edges."""
    return _map_on_screen(s2r, node, g, gateway, diagnostics, [0])


def _map_on_screen(s2r, node, g, gateway, diagnostics, calls) -> list[InteractionEdge]:
    edges = g.outgoing(node.node_id)
    if not edges:
        return []
    calls[0] += 1
    if not gateway.map_gate(s2r.formatted(), node, edges).maps:
        return []
    calls[0] += 1
    answer = gateway.map_list(s2r.formatted(), node, edges)
    if answer.dropped and diagnostics is not None:
        diagnostics.append(
            f"S2R {s2r.index} on node {node.node_id}: dropped interaction ids not on the screen: {answer.dropped}"
        )
    by_id = {e.edge_id: e for e in edges}
    return [by_id[i] for i in answer.edge_ids]


def fill_gap(g: ExecutionGraph, prev_node: str, current_node: str) -> list[InteractionEdge] | None:
    """Missing interactions between two mapped steps; None if unreachable."""
    return shortest_path(g, prev_node, current_node)


class _Best(NamedTuple):
    mapped: int
    length: int
    edge_ids: tuple[int, ...]
    # per S2R: (mapped edges, gap edges, edge taken)
    choices: tuple

    def rank(self) -> tuple:
        return (-self.mapped, self.length, self.edge_ids)


def traverse(g: ExecutionGraph, s2rs: list[IndividualS2R], gateway: Gateway,
             verbose: bool = False) -> TraversalResult:
    if not g.nodes:
        raise TraversalError("cannot traverse an empty graph")
    start = g.start_id
    if not s2rs:
        return TraversalResult([], [], 0, TraversalStats())

    visited: set[tuple[str, int]] = set()
    screen_cache: dict[tuple[str, int], list[InteractionEdge]] = {}
    memo: dict[tuple[int, str], _Best] = {}
    diagnostics: list[str] = []
    trace: list[str] = []
    calls = [0]

    def mapped_at(node_id: str, i: int) -> list[InteractionEdge]:
        key = (node_id, i)
        if key not in visited:
            visited.add(key)
            edges = _map_on_screen(s2rs[i], g.node(node_id), g, gateway, diagnostics, calls)
            screen_cache[key] = edges
            if verbose:
                ids = [e.edge_id for e in edges]
                trace.append(f"visit node={node_id} s2r={i} {s2rs[i].formatted()} -> {ids if ids else 'no map'}")
        return screen_cache[key]

    def best(i: int, node_id: str) -> _Best:
        key = (i, node_id)
        if key in memo:
            return memo[key]
        if i == len(s2rs):
            result = _Best(0, 0, (), ())
        else:
            rest = best(i + 1, node_id)
            result = _Best(rest.mapped, rest.length, rest.edge_ids, (((), (), None),) + rest.choices)
            for m in g.reachable_from(node_id):
                edges = mapped_at(m, i)
                if not edges:
                    continue
                gap = tuple(shortest_path(g, node_id, m))
                gap_ids = tuple(e.edge_id for e in gap)
                for e in edges:
                    rest = best(i + 1, e.target)
                    cand = _Best(
                        rest.mapped + 1,
                        rest.length + len(gap) + 1,
                        gap_ids + (e.edge_id,) + rest.edge_ids,
                        ((tuple(edges), gap, e),) + rest.choices,
                    )
                    if cand.rank() < result.rank():
                        result = cand
        memo[key] = result
        return result

    chosen = best(0, start)
    steps: list[StepMapping] = []
    path: list[InteractionEdge] = []
    for i, (edges, gap, taken) in enumerate(chosen.choices):
        steps.append(StepMapping(i, label_for(edges), list(edges), list(gap), taken))
        path.extend(gap)
        if taken is not None:
            path.append(taken)
        if verbose:
            trace.append(
                f"step {i}: {label_for(edges)} mapped={[e.edge_id for e in edges]} "
                f"gap={[e.edge_id for e in gap]} via={taken.edge_id if taken else '-'}"
            )
    stats = TraversalStats(len({n for n, _ in visited}), len(visited), calls[0])
    for line in trace:
        log.debug(line)
    return TraversalResult(path, steps, chosen.mapped, stats, diagnostics, trace)
