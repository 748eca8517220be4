"""Workflow graph intermediate representation.

A :class:`WorkflowGraph` is an immutable, id-keyed set of node instances whose
inputs are either literal values or links to an upstream node's output slot.
Both the JSON and the code forms of a workflow decode into this type.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Optional, Union

from .errors import CyclicGraph, InvalidGraph

Scalar = Union[str, int, float, bool]

LINK = "link"
LITERAL = "literal"


@dataclass(frozen=True)
class ParamSpec:
    name: str
    kind: str  # LINK | LITERAL
    type: str


@dataclass(frozen=True)
class OutputSpec:
    name: str
    type: str


@dataclass(frozen=True)
class NodeSpec:
    """Documentation of one node type: its name, usage text and I/O signature."""

    type_name: str
    usage: str = ""
    inputs: tuple[ParamSpec, ...] = ()
    outputs: tuple[OutputSpec, ...] = ()

    def link_params(self) -> list[str]:
        return [p.name for p in self.inputs if p.kind == LINK]

    def to_dict(self) -> dict:
        return {
            "type_name": self.type_name,
            "usage": self.usage,
            "inputs": [{"name": p.name, "kind": p.kind, "type": p.type} for p in self.inputs],
            "outputs": [{"name": o.name, "type": o.type} for o in self.outputs],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "NodeSpec":
        inputs = []
        for p in data.get("inputs") or ():
            kind = p.get("kind", LITERAL)
            if kind not in (LINK, LITERAL):
                raise ValueError(f"unknown param kind {kind!r}")
            inputs.append(ParamSpec(str(p["name"]), kind, str(p.get("type", ""))))
        outputs = [OutputSpec(str(o["name"]), str(o.get("type", ""))) for o in data.get("outputs") or ()]
        name = data["type_name"]
        if not isinstance(name, str) or not name:
            raise ValueError("type_name must be a nonempty string")
        return cls(name, str(data.get("usage", "")), tuple(inputs), tuple(outputs))


@dataclass(frozen=True, eq=False)
class Literal:
    value: Scalar

    def __post_init__(self):
        v = self.value
        if not isinstance(v, (str, int, float, bool)):
            raise TypeError(f"literal must be str, int, float or bool, got {type(v).__name__}")
        if isinstance(v, float) and not math.isfinite(v):
            raise ValueError("non-finite float literal")

    # bool is an int subclass: True must not equal 1, and 1 must not equal 1.0
    def __eq__(self, other):
        if not isinstance(other, Literal):
            return NotImplemented
        return type(self.value) is type(other.value) and self.value == other.value

    def __hash__(self):
        return hash((type(self.value).__name__, self.value))


@dataclass(frozen=True)
class Link:
    source_id: int
    output_index: int

    def __post_init__(self):
        if self.output_index < 0:
            raise ValueError("output_index must be non-negative")


Binding = Union[Literal, Link]


@dataclass(frozen=True)
class NodeInstance:
    id: int
    type_name: str
    bindings: tuple[tuple[str, Binding], ...] = ()

    def __post_init__(self):
        if not isinstance(self.id, int) or isinstance(self.id, bool) or self.id < 1:
            raise ValueError(f"node id must be a positive integer, got {self.id!r}")
        names = [name for name, _ in self.bindings]
        if len(set(names)) != len(names):
            raise ValueError(f"node {self.id}: duplicate binding names")
        # canonical order so that equality ignores source ordering
        object.__setattr__(self, "bindings", tuple(sorted(self.bindings, key=lambda b: b[0])))

    @classmethod
    def make(cls, id: int, type_name: str, bindings: Mapping[str, Binding] | None = None) -> "NodeInstance":
        return cls(id, type_name, tuple((bindings or {}).items()))

    def binding_map(self) -> dict[str, Binding]:
        return dict(self.bindings)

    def links(self) -> list[tuple[str, Link]]:
        return [(n, b) for n, b in self.bindings if isinstance(b, Link)]


Edge = tuple[int, int, int, str]  # (source_id, output_index, target_id, param_name)


@dataclass(frozen=True)
class WorkflowGraph:
    """Immutable workflow graph. ``nodes`` is kept sorted by id.

    ``aliases`` records original string ids that were remapped to integers on
    parse; it does not take part in equality.
    """

    nodes: tuple[NodeInstance, ...] = ()
    aliases: tuple[tuple[str, int], ...] = field(default=(), compare=False)

    def __post_init__(self):
        ordered = tuple(sorted(self.nodes, key=lambda n: n.id))
        ids = [n.id for n in ordered]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate node ids")
        object.__setattr__(self, "nodes", ordered)

    @classmethod
    def from_nodes(cls, nodes: Iterable[NodeInstance], aliases: Mapping[str, int] | None = None) -> "WorkflowGraph":
        return cls(tuple(nodes), tuple(sorted((aliases or {}).items())))

    @cached_property
    def _by_id(self) -> dict[int, NodeInstance]:
        return {n.id: n for n in self.nodes}

    def __len__(self) -> int:
        return len(self.nodes)

    def __contains__(self, node_id: int) -> bool:
        return node_id in self._by_id

    def node(self, node_id: int) -> NodeInstance:
        return self._by_id[node_id]

    @property
    def ids(self) -> list[int]:
        return [n.id for n in self.nodes]

    @cached_property
    def edges(self) -> tuple[Edge, ...]:
        out = []
        for n in self.nodes:
            for param, link in n.links():
                out.append((link.source_id, link.output_index, n.id, param))
        return tuple(sorted(out))

    def successors(self) -> dict[int, set[int]]:
        """Adjacency over existing nodes only (dangling links are skipped)."""
        succ: dict[int, set[int]] = {i: set() for i in self.ids}
        for src, _, dst, _ in self.edges:
            if src in succ:
                succ[src].add(dst)
        return succ


@dataclass(frozen=True)
class ValidationReport:
    is_dag: bool
    cycle_witness: Optional[tuple[int, ...]] = None
    dangling: tuple[tuple[int, str], ...] = ()
    isolated: int = 0
    # (node id, param) whose output_index exceeds the source spec's output count
    bad_outputs: tuple[tuple[int, str], ...] = ()
    # (node id, param) link-kind inputs left unbound
    unbound: tuple[tuple[int, str], ...] = ()

    @property
    def is_valid(self) -> bool:
        return self.is_dag and not self.dangling and not self.bad_outputs and not self.unbound

    def describe(self) -> str:
        parts = []
        if self.cycle_witness:
            parts.append("cycle: " + " -> ".join(str(i) for i in self.cycle_witness + self.cycle_witness[:1]))
        for node_id, param in self.dangling:
            parts.append(f"dangling link: node {node_id} input {param!r}")
        for node_id, param in self.bad_outputs:
            parts.append(f"output index out of range: node {node_id} input {param!r}")
        for node_id, param in self.unbound:
            parts.append(f"unbound link input: node {node_id} input {param!r}")
        return "; ".join(parts) or "ok"

    def to_dict(self) -> dict:
        return {
            "is_dag": self.is_dag,
            "is_valid": self.is_valid,
            "cycle_witness": list(self.cycle_witness) if self.cycle_witness else None,
            "dangling": [list(d) for d in self.dangling],
            "isolated": self.isolated,
            "bad_outputs": [list(d) for d in self.bad_outputs],
            "unbound": [list(d) for d in self.unbound],
        }


def _find_cycle(succ: dict[int, set[int]]) -> Optional[tuple[int, ...]]:
    WHITE, GREY, BLACK = 0, 1, 2
    color = dict.fromkeys(succ, WHITE)
    for root in sorted(succ):
        if color[root] != WHITE:
            continue
        stack = [(root, iter(sorted(succ[root])))]
        path = [root]
        color[root] = GREY
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                stack.pop()
                path.pop()
                color[node] = BLACK
            elif color[nxt] == GREY:
                cycle = path[path.index(nxt):]
                k = cycle.index(min(cycle))
                return tuple(cycle[k:] + cycle[:k])
            elif color[nxt] == WHITE:
                color[nxt] = GREY
                path.append(nxt)
                stack.append((nxt, iter(sorted(succ[nxt]))))
    return None


def validate_dag(graph: WorkflowGraph, kb: Mapping[str, NodeSpec] | None = None) -> ValidationReport:
    """Structural check. Never raises; problems are listed in the report.

    With ``kb`` (type name -> NodeSpec), link output indices are checked
    against the source type's output count and link-kind inputs must be bound.
    """
    succ = graph.successors()
    cycle = _find_cycle(succ)
    dangling = tuple((dst, param) for src, _, dst, param in graph.edges if src not in graph)
    touched = {s for s, _, d, _ in graph.edges if s in graph} | {d for s, _, d, _ in graph.edges if s in graph}
    isolated = sum(1 for i in graph.ids if i not in touched)

    bad_outputs: list[tuple[int, str]] = []
    unbound: list[tuple[int, str]] = []
    if kb is not None:
        for src, idx, dst, param in graph.edges:
            if src in graph:
                spec = kb.get(graph.node(src).type_name)
                if spec is not None and idx >= len(spec.outputs):
                    bad_outputs.append((dst, param))
        for n in graph.nodes:
            spec = kb.get(n.type_name)
            if spec is None:
                continue
            bound = n.binding_map()
            for p in spec.link_params():
                if not isinstance(bound.get(p), Link):
                    unbound.append((n.id, p))
    return ValidationReport(
        is_dag=cycle is None,
        cycle_witness=cycle,
        dangling=dangling,
        isolated=isolated,
        bad_outputs=tuple(sorted(bad_outputs)),
        unbound=tuple(sorted(unbound)),
    )


def topological_order(graph: WorkflowGraph) -> list[int]:
    """Kahn's algorithm; among ready nodes the smallest id goes first."""
    succ = graph.successors()
    indegree = dict.fromkeys(succ, 0)
    for targets in succ.values():
        for t in targets:
            indegree[t] += 1
    ready = [i for i, d in indegree.items() if d == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        node = heapq.heappop(ready)
        order.append(node)
        for t in succ[node]:
            indegree[t] -= 1
            if indegree[t] == 0:
                heapq.heappush(ready, t)
    if len(order) != len(succ):
        raise CyclicGraph(_find_cycle(succ) or ())
    return order


def node_type_set(graph: WorkflowGraph) -> frozenset[str]:
    return frozenset(n.type_name for n in graph.nodes)


def type_chain(graph: WorkflowGraph) -> list[str]:
    """Node type names in topological order."""
    return [graph.node(i).type_name for i in topological_order(graph)]


def require_valid(graph: WorkflowGraph) -> ValidationReport:
    report = validate_dag(graph)
    if not report.is_valid:
        raise InvalidGraph(report.describe(), report)
    return report
