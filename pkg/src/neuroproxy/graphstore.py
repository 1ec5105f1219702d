"""Typed property multigraph with traversal, shortest path and tree-extracting queries.

Query text form::

    match Event{readout=3} { id, time, snapshot->Snapshot depth 1 { clock, potentials } }

``edge->Label`` follows outgoing edges, ``edge<-Label`` incoming ones. A child
selector may carry property equalities like the root (``edge->Label{k=v}``).
Each result node holds exactly the requested fields, followed by one list per
expansion clause keyed by its edge label.
"""

from __future__ import annotations

import copy
import heapq
import json
import math
import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from ._text import Scalar, Scanner, TextSyntaxError, is_scalar

_TYPES: dict[str, tuple[type, ...]] = {
    "int": (int,),
    "real": (int, float),
    "str": (str,),
    "bool": (bool,),
    "any": (int, float, str, bool),
}
BUILTIN_FIELDS = ("id", "label")


class GraphError(ValueError):
    pass


class SchemaError(GraphError):
    pass


class DanglingEndpointError(GraphError):
    pass


class NegativeWeightError(GraphError):
    pass


class QuerySyntaxError(GraphError):
    pass


@dataclass(frozen=True)
class GraphSchema:
    """Allowed property names and scalar types per vertex and edge label.

    Types are named ``int``, ``real``, ``str``, ``bool`` or ``any``.
    """

    vertex_labels: Mapping[str, Mapping[str, str]] = field(default_factory=dict)
    edge_labels: Mapping[str, Mapping[str, str]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for table in (self.vertex_labels, self.edge_labels):
            for label, props in table.items():
                for name, kind in props.items():
                    if kind not in _TYPES:
                        raise SchemaError(f"{label}.{name}: unknown type {kind!r}")
                    if name in BUILTIN_FIELDS:
                        raise SchemaError(f"{label}.{name}: reserved field name")

    def check(self, table: Mapping[str, Mapping[str, str]], what: str, label: str, props: Mapping[str, Any]) -> None:
        if label not in table:
            raise SchemaError(f"unknown {what} label {label!r}")
        allowed = table[label]
        for name, value in props.items():
            if name not in allowed:
                raise SchemaError(f"{what} label {label!r} has no property {name!r}")
            kind = allowed[name]
            ok = is_scalar(value) and isinstance(value, _TYPES[kind])
            if kind in ("int", "real") and isinstance(value, bool):
                ok = False
            if not ok:
                raise SchemaError(f"{label}.{name} expects {kind}, got {value!r}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "vertex_labels": {k: dict(v) for k, v in self.vertex_labels.items()},
            "edge_labels": {k: dict(v) for k, v in self.edge_labels.items()},
        }


@dataclass
class Vertex:
    id: str
    label: str
    props: dict[str, Scalar] = field(default_factory=dict)


@dataclass
class Edge:
    id: str
    src: str
    dst: str
    label: str
    weight: float | None = None
    props: dict[str, Scalar] = field(default_factory=dict)


class PropertyGraph:
    """Directed labeled multigraph. One writer at a time; readers should query a snapshot."""

    def __init__(self, schema: GraphSchema) -> None:
        self.schema = schema
        self._vertices: dict[str, Vertex] = {}
        self._edges: dict[str, Edge] = {}
        self._out: dict[str, set[str]] = {}
        self._in: dict[str, set[str]] = {}
        self._lock = threading.RLock()

    # -- mutation ---------------------------------------------------------

    def upsert_vertex(self, vertex_id: str, label: str, props: Mapping[str, Scalar] | None = None) -> str:
        props = dict(props or {})
        self.schema.check(self.schema.vertex_labels, "vertex", label, props)
        with self._lock:
            existing = self._vertices.get(vertex_id)
            if existing is not None and existing.label != label and (
                self._out[vertex_id] or self._in[vertex_id]
            ):
                raise SchemaError(f"cannot relabel connected vertex {vertex_id!r}")
            self._vertices[vertex_id] = Vertex(vertex_id, label, props)
            self._out.setdefault(vertex_id, set())
            self._in.setdefault(vertex_id, set())
        return vertex_id

    def upsert_edge(
        self,
        edge_id: str,
        src: str,
        dst: str,
        label: str,
        weight: float | None = None,
        props: Mapping[str, Scalar] | None = None,
    ) -> str:
        props = dict(props or {})
        self.schema.check(self.schema.edge_labels, "edge", label, props)
        if weight is not None and not (weight >= 0 and math.isfinite(weight)):
            raise NegativeWeightError(f"edge {edge_id!r} weight {weight!r} must be finite and >= 0")
        with self._lock:
            for end in (src, dst):
                if end not in self._vertices:
                    raise DanglingEndpointError(f"edge {edge_id!r} endpoint {end!r} does not exist")
            old = self._edges.get(edge_id)
            if old is not None:
                self._out[old.src].discard(edge_id)
                self._in[old.dst].discard(edge_id)
            self._edges[edge_id] = Edge(edge_id, src, dst, label, weight, props)
            self._out[src].add(edge_id)
            self._in[dst].add(edge_id)
        return edge_id

    def remove_edge(self, edge_id: str) -> str:
        with self._lock:
            edge = self._edges.pop(edge_id, None)
            if edge is None:
                raise GraphError(f"no edge {edge_id!r}")
            self._out[edge.src].discard(edge_id)
            self._in[edge.dst].discard(edge_id)
        return edge_id

    def remove_vertex(self, vertex_id: str, cascade: bool = False) -> str:
        with self._lock:
            if vertex_id not in self._vertices:
                raise GraphError(f"no vertex {vertex_id!r}")
            incident = self._out[vertex_id] | self._in[vertex_id]
            if incident and not cascade:
                raise GraphError(f"vertex {vertex_id!r} has {len(incident)} incident edges; pass cascade=True")
            for edge_id in sorted(incident):
                self.remove_edge(edge_id)
            del self._vertices[vertex_id], self._out[vertex_id], self._in[vertex_id]
        return vertex_id

    # -- read access ------------------------------------------------------

    def vertex(self, vertex_id: str) -> Vertex:
        return self._vertices[vertex_id]

    def edge(self, edge_id: str) -> Edge:
        return self._edges[edge_id]

    def has_vertex(self, vertex_id: str) -> bool:
        return vertex_id in self._vertices

    def vertices(self, label: str | None = None) -> list[Vertex]:
        return [v for v in self._vertices.values() if label is None or v.label == label]

    def edges(self, label: str | None = None) -> list[Edge]:
        return [e for e in self._edges.values() if label is None or e.label == label]

    def __len__(self) -> int:
        return len(self._vertices)

    def out_edges(self, vertex_id: str) -> list[Edge]:
        return [self._edges[e] for e in sorted(self._out[vertex_id])]

    def in_edges(self, vertex_id: str) -> list[Edge]:
        return [self._edges[e] for e in sorted(self._in[vertex_id])]

    def snapshot(self) -> PropertyGraph:
        with self._lock:
            snap = PropertyGraph(self.schema)
            snap._vertices = copy.deepcopy(self._vertices)
            snap._edges = copy.deepcopy(self._edges)
            snap._out = {k: set(v) for k, v in self._out.items()}
            snap._in = {k: set(v) for k, v in self._in.items()}
        return snap

    def _neighbours(self, vertex_id: str, edge_label: str | None, direction: str) -> list[tuple[str, Edge]]:
        out = []
        if direction in ("out", "both"):
            for eid in self._out[vertex_id]:
                e = self._edges[eid]
                if edge_label is None or e.label == edge_label:
                    out.append((e.dst, e))
        if direction in ("in", "both"):
            for eid in self._in[vertex_id]:
                e = self._edges[eid]
                if edge_label is None or e.label == edge_label:
                    out.append((e.src, e))
        if direction not in ("out", "in", "both"):
            raise GraphError(f"unknown direction {direction!r}")
        return out

    # -- algorithms -------------------------------------------------------

    def traverse(
        self,
        start: str,
        edge_label: str | None = None,
        direction: str = "out",
        max_depth: int | None = None,
    ) -> set[str]:
        """Breadth-first reachability with a global visited set; ``None`` label follows every edge."""
        if start not in self._vertices:
            raise GraphError(f"unknown start vertex {start!r}")
        visited = {start}
        frontier = deque([(start, 0)])
        while frontier:
            vid, depth = frontier.popleft()
            if max_depth is not None and depth >= max_depth:
                continue
            for nxt, _ in self._neighbours(vid, edge_label, direction):
                if nxt not in visited:
                    visited.add(nxt)
                    frontier.append((nxt, depth + 1))
        return visited

    def shortest_path(
        self, src: str, dst: str, edge_label: str | None = None
    ) -> tuple[list[str], float] | None:
        """Dijkstra over outgoing edges. Returns (path, cost), or None when unreachable.

        Unweighted edges count as weight 1. Among equal-cost paths the
        lexicographically smallest vertex-id sequence wins; ordering the heap
        on (cost, path) gives that directly because extending two paths by the
        same edge preserves their order.
        """
        for end in (src, dst):
            if end not in self._vertices:
                raise GraphError(f"unknown vertex {end!r}")
        heap: list[tuple[float, list[str]]] = [(0.0, [src])]
        done: set[str] = set()
        while heap:
            cost, path = heapq.heappop(heap)
            here = path[-1]
            if here in done:
                continue
            if here == dst:
                return path, cost
            done.add(here)
            for nxt, edge in self._neighbours(here, edge_label, "out"):
                weight = 1.0 if edge.weight is None else edge.weight
                if weight < 0:
                    raise NegativeWeightError(f"edge {edge.id!r} has negative weight {weight}")
                if nxt not in done:
                    heapq.heappush(heap, (cost + weight, path + [nxt]))
        return None

    # -- documents --------------------------------------------------------

    def subgraph_document(self, vertex_ids: Iterable[str]) -> dict[str, Any]:
        """Vertices plus every edge with both endpoints in the set, as a JSON-ready dict."""
        ids = set(vertex_ids)
        return {
            "vertices": [
                {"id": v.id, "label": v.label, "props": dict(v.props)}
                for v in sorted((self._vertices[i] for i in ids), key=lambda v: v.id)
            ],
            "edges": [
                {"id": e.id, "src": e.src, "dst": e.dst, "label": e.label, "weight": e.weight, "props": dict(e.props)}
                for e in sorted(self._edges.values(), key=lambda e: e.id)
                if e.src in ids and e.dst in ids
            ],
        }

    def ingest(self, document: Mapping[str, Any]) -> None:
        for v in document.get("vertices", ()):
            self.upsert_vertex(v["id"], v["label"], v.get("props"))
        for e in document.get("edges", ()):
            self.upsert_edge(e["id"], e["src"], e["dst"], e["label"], e.get("weight"), e.get("props"))

    def query(self, q: GraphQuery | str) -> list[dict[str, Any]]:
        if isinstance(q, str):
            q = parse_query(q)
        return run_query(self, q)


# -- queries ---------------------------------------------------------------

@dataclass(frozen=True)
class Selector:
    label: str | None = None
    props: tuple[tuple[str, Scalar], ...] = ()

    def matches(self, vertex: Vertex) -> bool:
        if self.label is not None and vertex.label != self.label:
            return False
        for name, value in self.props:
            actual = vertex.id if name == "id" else vertex.props.get(name, _MISSING)
            if not _same_scalar(actual, value):
                return False
        return True


def _same_scalar(a: Any, b: Any) -> bool:
    numeric = (int, float)
    if isinstance(a, numeric) and isinstance(b, numeric) and not isinstance(a, bool) and not isinstance(b, bool):
        return a == b
    return type(a) is type(b) and a == b


_MISSING = object()


@dataclass(frozen=True)
class Expansion:
    edge_label: str
    direction: str
    child: Selector
    depth: int
    fields: tuple[str, ...]
    expansions: tuple[Expansion, ...] = ()

    def __post_init__(self) -> None:
        if self.depth < 1:
            raise QuerySyntaxError(f"depth for {self.edge_label!r} must be >= 1")
        if not self.fields:
            raise QuerySyntaxError(f"expansion {self.edge_label!r} requests no fields")
        if self.depth > 1 and any(e.edge_label == self.edge_label for e in self.expansions):
            raise QuerySyntaxError(f"{self.edge_label!r} is both repeated and nested")


@dataclass(frozen=True)
class GraphQuery:
    root: Selector
    fields: tuple[str, ...]
    expansions: tuple[Expansion, ...] = ()

    def __post_init__(self) -> None:
        if not self.fields:
            raise QuerySyntaxError("query requests no fields")


def _parse_selector(scanner: Scanner) -> Selector:
    label = scanner.ident()
    props = []
    mark = scanner.pos
    if scanner.accept("{"):
        # '{name=' opens a property filter; anything else is the field block
        if scanner.accept("}"):
            return Selector(label)
        try:
            scanner.ident()
            is_filter = scanner.peek("=")
        except TextSyntaxError:
            is_filter = False
        scanner.pos = mark + 1
        if not is_filter:
            scanner.pos = mark
            return Selector(label)
        while True:
            name = scanner.ident()
            scanner.expect("=")
            props.append((name, scanner.scalar()))
            if scanner.accept("}"):
                break
            scanner.expect(",")
    return Selector(label, tuple(props))


def _parse_block(scanner: Scanner) -> tuple[tuple[str, ...], tuple[Expansion, ...]]:
    scanner.expect("{")
    fields: list[str] = []
    expansions: list[Expansion] = []
    while True:
        name = scanner.ident()
        if scanner.accept("->") or scanner.peek("<-"):
            direction = "out"
            if scanner.accept("<-"):
                direction = "in"
            child = _parse_selector(scanner)
            depth = 1
            if scanner.peek("depth"):
                scanner.ident()
                value = scanner.scalar()
                if not isinstance(value, int) or isinstance(value, bool):
                    raise scanner.error("depth must be an integer")
                depth = value
            sub_fields, sub_exp = _parse_block(scanner)
            if any(e.edge_label == name for e in expansions):
                raise scanner.error(f"edge label {name!r} expanded twice in one block")
            expansions.append(Expansion(name, direction, child, depth, sub_fields, sub_exp))
        else:
            fields.append(name)
        if scanner.accept("}"):
            break
        scanner.expect(",")
    if not fields:
        raise scanner.error("block requests no fields")
    return tuple(fields), tuple(expansions)


def parse_query(text: str) -> GraphQuery:
    scanner = Scanner(text)
    try:
        if scanner.ident() != "match":
            raise scanner.error("query must start with 'match'")
        root = _parse_selector(scanner)
        fields, expansions = _parse_block(scanner)
        if not scanner.at_end():
            raise scanner.error("unexpected text after query")
        return GraphQuery(root, fields, expansions)
    except TextSyntaxError as exc:
        raise QuerySyntaxError(str(exc)) from None


def _check_fields(schema: GraphSchema, label: str | None, fields: Iterable[str]) -> None:
    if label is None:
        known = set(BUILTIN_FIELDS).union(*(p.keys() for p in schema.vertex_labels.values()))
    else:
        if label not in schema.vertex_labels:
            raise SchemaError(f"unknown vertex label {label!r}")
        known = set(BUILTIN_FIELDS) | set(schema.vertex_labels[label])
    for name in fields:
        if name not in known:
            raise SchemaError(f"unknown field {name!r} for label {label!r}")


def _check_query(schema: GraphSchema, q: GraphQuery) -> None:
    _check_fields(schema, q.root.label, q.fields)
    stack = list(q.expansions)
    while stack:
        exp = stack.pop()
        if exp.edge_label not in schema.edge_labels:
            raise SchemaError(f"unknown edge label {exp.edge_label!r}")
        _check_fields(schema, exp.child.label, exp.fields)
        stack.extend(exp.expansions)


def _node(vertex: Vertex, fields: tuple[str, ...]) -> dict[str, Any]:
    node: dict[str, Any] = {}
    for name in fields:
        if name == "id":
            node[name] = vertex.id
        elif name == "label":
            node[name] = vertex.label
        else:
            node[name] = vertex.props.get(name)
    return node


def _expand(graph: PropertyGraph, vertex: Vertex, exp: Expansion, level: int, path: frozenset[str]) -> list[dict[str, Any]]:
    children = sorted(
        {nid for nid, _ in graph._neighbours(vertex.id, exp.edge_label, exp.direction)}
    )
    out = []
    for cid in children:
        if cid in path:
            continue  # ancestor on this root-to-leaf path: cycle guard
        child = graph._vertices[cid]
        if not exp.child.matches(child):
            continue
        node = _node(child, exp.fields)
        child_path = path | {cid}
        for sub in exp.expansions:
            node[sub.edge_label] = _expand(graph, child, sub, 1, child_path)
        if level < exp.depth:
            node[exp.edge_label] = _expand(graph, child, exp, level + 1, child_path)
        out.append(node)
    return out


def run_query(graph: PropertyGraph, q: GraphQuery) -> list[dict[str, Any]]:
    """Extract result trees; an empty list when the root selector matches nothing."""
    _check_query(graph.schema, q)
    roots = sorted((v for v in graph._vertices.values() if q.root.matches(v)), key=lambda v: v.id)
    results = []
    for root in roots:
        node = _node(root, q.fields)
        for exp in q.expansions:
            node[exp.edge_label] = _expand(graph, root, exp, 1, frozenset({root.id}))
        results.append(node)
    return results


def dumps_result(result: Any) -> str:
    """Serialize a result tree; key order follows the query, so output is stable."""
    return json.dumps(result, separators=(",", ":"), ensure_ascii=False)
