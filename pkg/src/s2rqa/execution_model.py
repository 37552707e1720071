"""Directed app-execution graph built from GUI interaction traces.

Nodes are unique GUI screens, identified by a hash of their component
hierarchy; edges are unique ``(source, target, action, component)``
interactions. A synthetic start node carries one ``open_app`` edge per
launch screen.
"""

from __future__ import annotations

import hashlib
import json
import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

log = logging.getLogger(__name__)

ACTIONS = ("tap", "long_tap", "type", "swipe", "open_app")
START_ID = "start"
GRAPH_FORMAT = "s2rqa-graph"
GRAPH_VERSION = 1


class TraceFormatError(ValueError):
    """A trace file violates the trace schema."""


class GraphFormatError(ValueError):
    """A graph file is corrupt, has an unknown version, or is inconsistent."""


class GraphError(KeyError):
    """Lookup of a node that is not in the graph."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "graph error"


@dataclass(frozen=True)
class GuiComponent:
    component_type: str
    resource_id: str | None = None
    text: str | None = None
    description: str | None = None
    child_index: int = 0
    children: tuple["GuiComponent", ...] = ()

    def identity(self) -> tuple[str, str, str]:
        """Component identity inside an edge tuple: type, id and label text."""
        return (self.component_type, self.resource_id or "", self.text or "")

    @property
    def label(self) -> str:
        """First non-empty of text, description, resource id, component type."""
        for value in (self.text, self.description, self.resource_id):
            if value and value.strip():
                return value.strip()
        return self.component_type

    def leaf(self) -> "GuiComponent":
        return GuiComponent(
            self.component_type, self.resource_id, self.text, self.description, self.child_index
        )

    def to_dict(self) -> dict:
        out: dict = {"type": self.component_type}
        if self.resource_id is not None:
            out["id"] = self.resource_id
        if self.text is not None:
            out["text"] = self.text
        if self.description is not None:
            out["desc"] = self.description
        if self.children:
            out["children"] = [c.to_dict() for c in self.children]
        return out


@dataclass(frozen=True)
class ScreenNode:
    node_id: str
    activity_name: str | None = None
    component_tree: tuple[GuiComponent, ...] = ()
    is_start: bool = False


@dataclass(frozen=True)
class InteractionEdge:
    edge_id: int
    source: str
    target: str
    action: str
    component: GuiComponent
    typed_text: str | None = None

    def key(self) -> tuple:
        return (self.source, self.target, self.action, self.component.identity())

    def identity(self) -> dict:
        """Serializable edge identity, stable across graph rebuilds."""
        ctype, cid, ctext = self.component.identity()
        return {
            "source": self.source,
            "target": self.target,
            "action": self.action,
            "component": {"type": ctype, "id": cid, "text": ctext},
        }


def edge_identity_key(identity: dict) -> tuple:
    """Hashable form of :meth:`InteractionEdge.identity`."""
    comp = identity["component"]
    return (
        identity["source"],
        identity["target"],
        identity["action"],
        (comp["type"], comp.get("id") or "", comp.get("text") or ""),
    )


@dataclass
class ExecutionGraph:
    app_id: str
    nodes: dict[str, ScreenNode]
    edges: list[InteractionEdge]
    _out: dict[str, list[InteractionEdge]] = field(init=False, repr=False, compare=False)
    _dist_cache: dict[str, dict[str, int]] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.edges = sorted(self.edges, key=lambda e: e.edge_id)
        self._out = {nid: [] for nid in self.nodes}
        for e in self.edges:
            self._out[e.source].append(e)
        self._dist_cache = {}

    @property
    def start_id(self) -> str:
        for nid, node in self.nodes.items():
            if node.is_start:
                return nid
        raise GraphError("graph has no start node")

    def node(self, node_id: str) -> ScreenNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise GraphError(f"unknown node: {node_id}") from None

    def outgoing(self, node_id: str) -> list[InteractionEdge]:
        self.node(node_id)
        return list(self._out[node_id])

    def edge(self, edge_id: int) -> InteractionEdge:
        e = self.edges[edge_id] if 0 <= edge_id < len(self.edges) else None
        if e is None or e.edge_id != edge_id:
            e = next((x for x in self.edges if x.edge_id == edge_id), None)
        if e is None:
            raise GraphError(f"unknown edge: {edge_id}")
        return e

    def distances_to(self, target: str) -> dict[str, int]:
        """Hop distance from every node that can reach ``target``."""
        cached = self._dist_cache.get(target)
        if cached is not None:
            return cached
        self.node(target)
        incoming: dict[str, list[str]] = {}
        for e in self.edges:
            incoming.setdefault(e.target, []).append(e.source)
        dist = {target: 0}
        queue = deque([target])
        while queue:
            cur = queue.popleft()
            for src in incoming.get(cur, ()):
                if src not in dist:
                    dist[src] = dist[cur] + 1
                    queue.append(src)
        self._dist_cache[target] = dist
        return dist

    def reachable_from(self, node_id: str) -> list[str]:
        """Nodes reachable from ``node_id`` in depth-first order (edge-id order)."""
        self.node(node_id)
        seen = {node_id}
        order = [node_id]
        stack = [iter(self._out[node_id])]
        while stack:
            e = next(stack[-1], None)
            if e is None:
                stack.pop()
                continue
            if e.target not in seen:
                seen.add(e.target)
                order.append(e.target)
                stack.append(iter(self._out[e.target]))
        return order


def outgoing(g: ExecutionGraph, node_id: str) -> list[InteractionEdge]:
    """Outgoing interactions of a node, sorted by edge id."""
    return g.outgoing(node_id)


def shortest_path(g: ExecutionGraph, source: str, target: str) -> list[InteractionEdge] | None:
    """Minimum-hop edge path; ties go to the smallest edge-id sequence.

    Returns ``[]`` when ``source == target`` and ``None`` when ``target`` is
    unreachable.
    """
    g.node(source)
    dist = g.distances_to(target)
    if source not in dist:
        return None
    path = []
    cur = source
    while cur != target:
        # edges are sorted by id, so the first edge that gets closer is the
        # lexicographically smallest continuation
        step = next(e for e in g._out[cur] if dist.get(e.target, -1) == dist[cur] - 1)
        path.append(step)
        cur = step.target
    return path


# --- traces -----------------------------------------------------------------

@dataclass(frozen=True)
class ScreenSnapshot:
    activity: str | None
    components: tuple[GuiComponent, ...]


@dataclass(frozen=True)
class TraceAction:
    kind: str
    target_component_path: tuple[int, ...] = ()
    typed_text: str | None = None


@dataclass(frozen=True)
class TraceStep:
    """One record: the action performed and the screen shown after it."""

    action: TraceAction
    screen: ScreenSnapshot


@dataclass
class Trace:
    app_id: str
    source: str
    steps: list[TraceStep]
    app_name: str | None = None
    path: str | None = None

    def __len__(self) -> int:
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)


def _opt_str(value, where: str) -> str | None:
    if value is None or isinstance(value, str):
        return value
    raise TraceFormatError(f"{where}: expected a string")


def _parse_component(raw, where: str, index: int) -> GuiComponent:
    if not isinstance(raw, dict):
        raise TraceFormatError(f"{where}: component must be an object")
    ctype = raw.get("type")
    if not isinstance(ctype, str) or not ctype.strip():
        raise TraceFormatError(f"{where}: field type: component type must be a non-empty string")
    children_raw = raw.get("children", [])
    if not isinstance(children_raw, list):
        raise TraceFormatError(f"{where}: field children: must be a list")
    children = tuple(
        _parse_component(c, f"{where}.children[{i}]", i) for i, c in enumerate(children_raw)
    )
    return GuiComponent(
        ctype,
        _opt_str(raw.get("id"), f"{where}: field id"),
        _opt_str(raw.get("text"), f"{where}: field text"),
        _opt_str(raw.get("desc"), f"{where}: field desc"),
        index,
        children,
    )


def _parse_screen(raw, where: str) -> ScreenSnapshot:
    if not isinstance(raw, dict):
        raise TraceFormatError(f"{where}: field screen: must be an object")
    comps = raw.get("components")
    if not isinstance(comps, list):
        raise TraceFormatError(f"{where}: field screen.components: must be a list")
    return ScreenSnapshot(
        _opt_str(raw.get("activity"), f"{where}: field screen.activity"),
        tuple(_parse_component(c, f"{where}: screen.components[{i}]", i) for i, c in enumerate(comps)),
    )


def resolve_component(screen: ScreenSnapshot, path: tuple[int, ...]) -> GuiComponent | None:
    level = screen.components
    comp = None
    for idx in path:
        if not 0 <= idx < len(level):
            return None
        comp = level[idx]
        level = comp.children
    return comp


def trace_from_dict(data, source_name: str = "<trace>") -> Trace:
    if not isinstance(data, dict):
        raise TraceFormatError(f"{source_name}: trace must be an object")
    app_id = data.get("app_id")
    if not isinstance(app_id, str) or not app_id:
        raise TraceFormatError(f"{source_name}: header: missing field: app_id")
    src = data.get("source")
    if src not in ("automated", "manual"):
        raise TraceFormatError(f"{source_name}: header: field source must be 'automated' or 'manual'")
    steps_raw = data.get("steps")
    if not isinstance(steps_raw, list) or not steps_raw:
        raise TraceFormatError(f"{source_name}: header: field steps must be a non-empty list")
    steps: list[TraceStep] = []
    for i, raw in enumerate(steps_raw):
        where = f"{source_name}: record {i}"
        if not isinstance(raw, dict):
            raise TraceFormatError(f"{where}: record must be an object")
        if "screen" not in raw:
            raise TraceFormatError(f"{where}: missing field: screen")
        if "action" not in raw or not isinstance(raw["action"], dict):
            raise TraceFormatError(f"{where}: missing field: action")
        act = raw["action"]
        kind = act.get("kind")
        if not isinstance(kind, str):
            raise TraceFormatError(f"{where}: missing field: action.kind")
        if kind not in ACTIONS:
            raise TraceFormatError(f"{where}: field action.kind: unsupported action: {kind}")
        if i == 0 and kind != "open_app":
            raise TraceFormatError(f"{where}: first record must be open_app")
        path = act.get("target_component_path", [])
        if kind == "open_app":
            path = []
        elif not isinstance(path, list) or not path or not all(
            isinstance(p, int) and not isinstance(p, bool) for p in path
        ):
            raise TraceFormatError(
                f"{where}: field action.target_component_path: must be a non-empty list of integers"
            )
        typed = _opt_str(act.get("typed_text"), f"{where}: field action.typed_text")
        screen = _parse_screen(raw["screen"], where)
        step = TraceStep(TraceAction(kind, tuple(path), typed), screen)
        if kind != "open_app" and resolve_component(steps[-1].screen, step.action.target_component_path) is None:
            raise TraceFormatError(
                f"{where}: field action.target_component_path: no component at {list(path)} on the previous screen"
            )
        steps.append(step)
    app_name = _opt_str(data.get("app_name"), f"{source_name}: header: field app_name")
    return Trace(app_id, src, steps, app_name, source_name)


def parse_trace(path: str | Path) -> Trace:
    """Read one trace file. Records keep execution order; record 0 is the launch."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError) as exc:
        raise TraceFormatError(f"{path}: cannot read trace: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise TraceFormatError(f"{path}: malformed trace: {exc}") from exc
    return trace_from_dict(data, str(path))


# --- graph construction -----------------------------------------------------

def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def screen_hash(components: Iterable[GuiComponent]) -> str:
    """Hash of the hierarchy shape: (depth, type, resource id, child index) in preorder.

    Text and descriptions are excluded, so typed or dynamic labels do not
    split one screen into many nodes.
    """
    rows: list = []

    def walk(comp: GuiComponent, depth: int) -> None:
        rows.append([depth, comp.component_type, comp.resource_id or "", comp.child_index])
        for child in comp.children:
            walk(child, depth + 1)

    for c in components:
        walk(c, 0)
    return hashlib.sha256(_canonical(rows).encode("utf-8")).hexdigest()[:16]


def _tree_key(snapshot: ScreenSnapshot) -> str:
    return _canonical([snapshot.activity or "", [c.to_dict() for c in snapshot.components]])


def _launch_component(trace: Trace) -> GuiComponent:
    return GuiComponent("app", trace.app_id, trace.app_name or trace.app_id, "launch the app")


def build_graph(traces: list[Trace], app_id: str | None = None) -> ExecutionGraph:
    """Merge traces into one graph.

    Screens with identical hierarchies merge, duplicate edge tuples merge,
    and edge ids are assigned by a breadth-first walk from the start node
    over canonically sorted edges, so the result does not depend on the order
    of ``traces``.
    """
    if not traces:
        raise ValueError("build_graph needs at least one trace")
    app_id = app_id or traces[0].app_id
    snapshots: dict[str, ScreenSnapshot] = {}
    # edge key -> (component, typed_text) candidates
    edge_obs: dict[tuple, list[tuple[GuiComponent, str | None]]] = {}

    for trace in traces:
        if trace.app_id != app_id:
            raise ValueError(f"trace {trace.path or '?'} is for app {trace.app_id}, not {app_id}")
        prev_snapshot: ScreenSnapshot | None = None
        prev_id = START_ID
        for step in trace.steps:
            nid = screen_hash(step.screen.components)
            old = snapshots.get(nid)
            if old is None or _tree_key(step.screen) < _tree_key(old):
                snapshots[nid] = step.screen
            if step.action.kind == "open_app":
                comp = _launch_component(trace)
                source = START_ID
            else:
                comp = resolve_component(prev_snapshot, step.action.target_component_path).leaf()
                source = prev_id
            key = (source, nid, step.action.kind, comp.identity())
            edge_obs.setdefault(key, []).append((comp, step.action.typed_text))
            prev_snapshot, prev_id = step.screen, nid

    nodes = {START_ID: ScreenNode(START_ID, None, (), True)}
    for nid, snap in snapshots.items():
        nodes[nid] = ScreenNode(nid, snap.activity, snap.components, False)

    merged = []
    for key, obs in edge_obs.items():
        comp = min((c for c, _ in obs), key=lambda c: _canonical(c.to_dict()) + str(c.child_index))
        typed = min((t for _, t in obs if t is not None), default=None)
        merged.append((key, comp, typed))
    return _assign_edge_ids(app_id, nodes, merged)


def _edge_sort_key(key: tuple) -> tuple:
    source, target, action, ident = key
    return (ACTIONS.index(action), ident, target)


def _assign_edge_ids(app_id: str, nodes: dict[str, ScreenNode], merged: list) -> ExecutionGraph:
    by_source: dict[str, list] = {}
    for item in merged:
        by_source.setdefault(item[0][0], []).append(item)
    for items in by_source.values():
        items.sort(key=lambda it: _edge_sort_key(it[0]))
    edges: list[InteractionEdge] = []
    seen = {START_ID}
    queue = deque([START_ID])
    while queue:
        cur = queue.popleft()
        for (source, target, action, _), comp, typed in by_source.get(cur, ()):
            edges.append(InteractionEdge(len(edges), source, target, action, comp, typed))
            if target not in seen:
                seen.add(target)
                queue.append(target)
    unreached = sorted(set(nodes) - seen)
    if unreached:
        raise GraphFormatError(f"nodes unreachable from the start node: {', '.join(unreached)}")
    return ExecutionGraph(app_id, nodes, edges)


def check_graph(g: ExecutionGraph) -> None:
    """Validate structural invariants; raises GraphFormatError."""
    starts = [n for n in g.nodes.values() if n.is_start]
    if len(starts) != 1:
        raise GraphFormatError(f"graph must have exactly one start node, found {len(starts)}")
    start = starts[0].node_id
    keys = set()
    for e in g.edges:
        if e.source not in g.nodes or e.target not in g.nodes:
            raise GraphFormatError(f"edge {e.edge_id} references an unknown node")
        if e.action not in ACTIONS:
            raise GraphFormatError(f"edge {e.edge_id}: unsupported action: {e.action}")
        if (e.action == "open_app") != (e.source == start):
            raise GraphFormatError(f"edge {e.edge_id}: open_app edges must leave the start node, and only they")
        if e.key() in keys:
            raise GraphFormatError(f"edge {e.edge_id} duplicates another edge tuple")
        keys.add(e.key())
    ids = [e.edge_id for e in g.edges]
    if ids != list(range(len(ids))):
        raise GraphFormatError("edge ids must be 0..n-1")
    unreached = sorted(set(g.nodes) - set(g.reachable_from(start)))
    if unreached:
        raise GraphFormatError(f"nodes unreachable from the start node: {', '.join(unreached)}")


# --- graph files ------------------------------------------------------------

def _component_from_dict(raw: dict, index: int) -> GuiComponent:
    return _parse_component(raw, "component", index)


def graph_to_dict(g: ExecutionGraph) -> dict:
    nodes = []
    for nid in sorted(g.nodes, key=lambda n: (n != START_ID, n)):
        n = g.nodes[nid]
        nodes.append({
            "node_id": n.node_id,
            "activity": n.activity_name,
            "is_start": n.is_start,
            "components": [c.to_dict() for c in n.component_tree],
        })
    edges = []
    for e in g.edges:
        row = {
            "edge_id": e.edge_id,
            "source": e.source,
            "target": e.target,
            "action": e.action,
            "component": e.component.to_dict(),
            "child_index": e.component.child_index,
        }
        if e.typed_text is not None:
            row["typed_text"] = e.typed_text
        edges.append(row)
    return {"format": GRAPH_FORMAT, "version": GRAPH_VERSION, "app_id": g.app_id, "nodes": nodes, "edges": edges}


def seal(doc: dict) -> dict:
    """Attach a sha256 over the canonical document."""
    body = {k: v for k, v in doc.items() if k != "sha256"}
    return {**body, "sha256": hashlib.sha256(_canonical(body).encode("utf-8")).hexdigest()}


def unseal(raw: bytes, kind: str, error: type[ValueError]) -> dict:
    """Decode a sealed JSON document, verifying its checksum."""
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise error(f"corrupt {kind} file: not valid UTF-8 ({exc.reason} at byte {exc.start})") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise error(f"corrupt {kind} file: invalid JSON ({exc.msg} at line {exc.lineno} column {exc.colno})") from None
    if not isinstance(doc, dict):
        raise error(f"corrupt {kind} file: top level must be an object")
    digest = doc.get("sha256")
    body = {k: v for k, v in doc.items() if k != "sha256"}
    if not isinstance(digest, str) or hashlib.sha256(_canonical(body).encode("utf-8")).hexdigest() != digest:
        raise error(f"corrupt {kind} file: checksum mismatch")
    return body


def dumps_graph(g: ExecutionGraph) -> str:
    return json.dumps(seal(graph_to_dict(g)), indent=1, ensure_ascii=False) + "\n"


def loads_graph(raw: bytes | str) -> ExecutionGraph:
    if isinstance(raw, str):
        raw = raw.encode("utf-8")
    return graph_from_dict(unseal(raw, "graph", GraphFormatError))


def save_graph(g: ExecutionGraph, path: str | Path) -> None:
    Path(path).write_text(dumps_graph(g), encoding="utf-8")


def graph_from_dict(doc: dict) -> ExecutionGraph:
    if doc.get("format") != GRAPH_FORMAT:
        raise GraphFormatError(f"not a graph file (format={doc.get('format')!r})")
    if doc.get("version") != GRAPH_VERSION:
        raise GraphFormatError(f"unsupported graph version: {doc.get('version')!r}")
    try:
        nodes = {}
        for raw in doc["nodes"]:
            comps = tuple(_component_from_dict(c, i) for i, c in enumerate(raw["components"]))
            node = ScreenNode(raw["node_id"], raw.get("activity"), comps, bool(raw["is_start"]))
            if node.node_id in nodes:
                raise GraphFormatError(f"duplicate node id: {node.node_id}")
            nodes[node.node_id] = node
        edges = []
        for raw in doc["edges"]:
            comp = _component_from_dict(raw["component"], int(raw.get("child_index", 0)))
            edges.append(InteractionEdge(
                int(raw["edge_id"]), raw["source"], raw["target"], raw["action"], comp, raw.get("typed_text"),
            ))
    except (KeyError, TypeError, TraceFormatError) as exc:
        raise GraphFormatError(f"malformed graph file: {exc}") from None
    for e in edges:
        if e.source not in nodes or e.target not in nodes:
            raise GraphFormatError(f"edge {e.edge_id} references an unknown node")
    g = ExecutionGraph(doc["app_id"], nodes, edges)
    check_graph(g)
    return g


def load_graph(path: str | Path) -> ExecutionGraph:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise GraphFormatError(f"cannot read graph file {path}: {exc.strerror}") from None
    return loads_graph(raw)


def load_traces(trace_dir: str | Path) -> list[Trace]:
    """Parse every ``*.json`` trace in a directory (sorted by name)."""
    files = sorted(Path(trace_dir).glob("*.json"))
    if not files:
        raise TraceFormatError(f"{trace_dir}: no trace files (*.json)")
    return [parse_trace(f) for f in files]
