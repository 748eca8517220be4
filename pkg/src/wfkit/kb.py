"""Node and workflow knowledge bases: cleaning pipelines and JSONL persistence."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Mapping, Optional, Union

from .codec import emit_code, emit_json, graph_to_api, parse_code, parse_json
from .errors import CodecError, CorruptRecord, InvalidGraph
from .ir import Link, NodeInstance, NodeSpec, WorkflowGraph, node_type_set, validate_dag

log = logging.getLogger(__name__)

DEFAULT_DENYLIST = frozenset({"Anything Anywhere"})


@dataclass
class NodeKB:
    specs: dict[str, NodeSpec] = field(default_factory=dict)
    provenance: dict[str, str] = field(default_factory=dict)

    def __contains__(self, type_name: str) -> bool:
        return type_name in self.specs

    def __len__(self) -> int:
        return len(self.specs)

    def names(self) -> list[str]:
        return sorted(self.specs)


@dataclass(frozen=True)
class WorkflowEntry:
    id: str
    description: str
    graph: WorkflowGraph
    code: str

    def canonical_json(self) -> bytes:
        return emit_json(self.graph)


@dataclass
class WorkflowKB:
    entries: list[WorkflowEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def get(self, entry_id: str) -> WorkflowEntry:
        for e in self.entries:
            if e.id == entry_id:
                return e
        raise KeyError(entry_id)


@dataclass
class CleaningStats:
    input_count: int = 0
    retained: int = 0
    # rejection counters
    duplicate: int = 0
    missing_io: int = 0
    name_conflict: int = 0
    invalid_structure: int = 0
    roundtrip_fail: int = 0
    denylisted_stripped: int = 0
    unknown_node: int = 0
    # informational, not part of the conservation sum
    nodes_stripped: int = 0

    REJECTIONS = (
        "duplicate",
        "missing_io",
        "name_conflict",
        "invalid_structure",
        "roundtrip_fail",
        "denylisted_stripped",
        "unknown_node",
    )

    @property
    def rejected(self) -> int:
        return sum(getattr(self, name) for name in self.REJECTIONS)

    def conserved(self) -> bool:
        return self.input_count == self.retained + self.rejected

    def to_dict(self) -> dict:
        return {**{f.name: getattr(self, f.name) for f in fields(self)}, "rejected": self.rejected}


# -- nodes ----------------------------------------------------------------------


def _as_spec(record) -> tuple[NodeSpec, str]:
    if isinstance(record, NodeSpec):
        return record, "unknown"
    return NodeSpec.from_dict(record), str(record.get("source", "unknown"))


def clean_nodes(records: Iterable[Union[NodeSpec, Mapping]]) -> tuple[NodeKB, CleaningStats]:
    """Exact-match dedup, then drop specs lacking inputs or outputs.

    Records sharing a type name but differing in content keep the first
    occurrence and count as ``name_conflict``.
    """
    stats = CleaningStats()
    seen = set()
    kept: dict[str, NodeSpec] = {}
    provenance: dict[str, str] = {}
    for record in records:
        stats.input_count += 1
        spec, source = _as_spec(record)
        if spec in seen:
            stats.duplicate += 1
            continue
        seen.add(spec)
        if not spec.inputs or not spec.outputs:
            stats.missing_io += 1
            continue
        if spec.type_name in kept:
            stats.name_conflict += 1
            continue
        kept[spec.type_name] = spec
        provenance[spec.type_name] = source
    stats.retained = len(kept)
    order = sorted(kept)
    return NodeKB({k: kept[k] for k in order}, {k: provenance[k] for k in order}), stats


# -- workflows ------------------------------------------------------------------


def _structurally_valid(graph: WorkflowGraph, kb: NodeKB) -> bool:
    if len(graph) == 0:
        return False
    return validate_dag(graph, kb.specs).is_valid


def _roundtrips(graph: WorkflowGraph) -> bool:
    try:
        canonical = emit_json(graph)
        back = parse_code(emit_code(graph))
        return back == graph and emit_json(back) == canonical and parse_json(canonical) == graph
    except (CodecError, InvalidGraph):
        return False


def strip_denylisted(graph: WorkflowGraph, denylist) -> Optional[WorkflowGraph]:
    """Remove denylisted nodes, rerouting their consumers to the node's sole upstream link.

    A denylisted node without consumers is simply dropped. One with consumers
    is spliced only if it has exactly one link input and every consumer reads
    its output slot 0. Returns None when some node cannot be removed that way.
    """
    nodes = {n.id: n for n in graph.nodes}
    for victim in sorted(i for i, n in nodes.items() if n.type_name in denylist):
        node = nodes[victim]
        consumers = [
            (n.id, p, b) for n in nodes.values() for p, b in n.links() if b.source_id == victim
        ]
        if consumers:
            incoming = node.links()
            if len(incoming) != 1 or any(b.output_index != 0 for _, _, b in consumers):
                return None
            upstream = incoming[0][1]
            for cid, param, _ in consumers:
                c = nodes[cid]
                bindings = c.binding_map()
                bindings[param] = Link(upstream.source_id, upstream.output_index)
                nodes[cid] = NodeInstance.make(cid, c.type_name, bindings)
        del nodes[victim]
    return WorkflowGraph.from_nodes(nodes.values())


def _record_parts(index: int, record) -> tuple[str, str, Union[bytes, str, dict]]:
    if isinstance(record, Mapping):
        return str(record.get("id", f"wf{index:05d}")), record.get("description", ""), record["json"]
    if len(record) == 3:
        return str(record[0]), record[1], record[2]
    description, payload = record
    return f"wf{index:05d}", description, payload


def clean_workflows(
    records: Iterable,
    kb: NodeKB,
    denylist: Iterable[str] = DEFAULT_DENYLIST,
) -> tuple[WorkflowKB, CleaningStats]:
    """Run the workflow cleaning pipeline.

    Records are ``(description, json)`` pairs, ``(id, description, json)``
    triples, or mappings with those keys. Stages, in order: structural
    validity, exact-duplicate removal on canonical JSON, JSON/code round-trip,
    denylist stripping (re-verified afterwards), unknown-node rejection.
    Stripping can make two inputs identical, so duplicates are checked once
    more on the final form.
    """
    denylist = frozenset(denylist)
    stats = CleaningStats()
    seen_raw: set[bytes] = set()
    seen_final: set[bytes] = set()
    entries = []
    for index, record in enumerate(records):
        stats.input_count += 1
        entry_id, description, payload = _record_parts(index, record)
        if isinstance(payload, (dict, list)):
            payload = json.dumps(payload)
        try:
            graph = parse_json(payload)
        except CodecError:
            stats.invalid_structure += 1
            continue
        if not _structurally_valid(graph, kb):
            stats.invalid_structure += 1
            continue
        canonical = emit_json(graph)
        if canonical in seen_raw:
            stats.duplicate += 1
            continue
        seen_raw.add(canonical)
        if not _roundtrips(graph):
            stats.roundtrip_fail += 1
            continue
        stripped = strip_denylisted(graph, denylist)
        if stripped is None or len(stripped) == 0 or not _structurally_valid(stripped, kb) or not _roundtrips(stripped):
            stats.denylisted_stripped += 1
            continue
        stats.nodes_stripped += len(graph) - len(stripped)
        if not node_type_set(stripped) <= kb.specs.keys():
            stats.unknown_node += 1
            continue
        final = emit_json(stripped)
        if final in seen_final:
            stats.duplicate += 1
            continue
        seen_final.add(final)
        entries.append(WorkflowEntry(entry_id, description, stripped, emit_code(stripped)))
    stats.retained = len(entries)
    return WorkflowKB(entries), stats


# -- persistence ----------------------------------------------------------------


def _entry_record(e: WorkflowEntry) -> dict:
    return {"id": e.id, "description": e.description, "json": graph_to_api(e.graph), "code": e.code}


def save_kb(path, kb: Union[NodeKB, WorkflowKB]) -> None:
    """Write one JSON record per line with a fixed field order."""
    lines = []
    if isinstance(kb, NodeKB):
        for name, spec in kb.specs.items():
            record = spec.to_dict()
            record["source"] = kb.provenance.get(name, "unknown")
            lines.append(json.dumps(record, ensure_ascii=False))
    else:
        lines = [json.dumps(_entry_record(e), ensure_ascii=False) for e in kb.entries]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def _read_records(path):
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.split("\n"), 1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except ValueError as exc:
            raise CorruptRecord(lineno, f"invalid JSON ({exc})") from None
        if not isinstance(record, dict):
            raise CorruptRecord(lineno, "record is not an object")
        yield lineno, record


def load_node_kb(path) -> NodeKB:
    kb = NodeKB()
    for lineno, record in _read_records(path):
        try:
            spec = NodeSpec.from_dict(record)
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise CorruptRecord(lineno, f"bad node spec: {exc}") from None
        if spec.type_name in kb.specs:
            raise CorruptRecord(lineno, f"duplicate type_name {spec.type_name!r}")
        kb.specs[spec.type_name] = spec
        kb.provenance[spec.type_name] = str(record.get("source", "unknown"))
    return kb


def load_workflow_kb(path) -> WorkflowKB:
    kb = WorkflowKB()
    for lineno, record in _read_records(path):
        try:
            graph = parse_json(json.dumps(record["json"]))
            code = record.get("code") or emit_code(graph)
            if parse_code(code) != graph:
                raise CorruptRecord(lineno, "code and json disagree")
            kb.entries.append(WorkflowEntry(str(record["id"]), str(record.get("description", "")), graph, code))
        except CorruptRecord:
            raise
        except (KeyError, CodecError, InvalidGraph) as exc:
            raise CorruptRecord(lineno, f"bad workflow record: {exc}") from None
    return kb


def load_kb(path, kind: Optional[str] = None) -> Union[NodeKB, WorkflowKB]:
    """Load a KB, detecting its kind from the first record unless ``kind`` is given."""
    if kind is None:
        kind = "nodes"
        for _, record in _read_records(path):
            kind = "workflows" if "json" in record else "nodes"
            break
    return load_workflow_kb(path) if kind == "workflows" else load_node_kb(path)
