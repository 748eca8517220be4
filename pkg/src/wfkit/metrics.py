"""Evaluation metrics: format validity, node-chain matching and MCIS graph matching."""

from __future__ import annotations

from bisect import bisect_left
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .codec import parse_code
from .errors import BudgetExceeded, CodecError, EmptyCorpus
from .ir import WorkflowGraph, type_chain, validate_dag

REPORT_SCHEMA = "wfkit.eval/1"
DEFAULT_BUDGET = 10_000_000


def format_validity(code_text: str, kb) -> bool:
    """Parses, uses only KB node types, and forms a DAG."""
    names = kb.specs if hasattr(kb, "specs") else kb
    try:
        graph = parse_code(code_text)
    except CodecError:
        return False
    if any(n.type_name not in names for n in graph.nodes):
        return False
    return validate_dag(graph).is_valid


# -- node level -----------------------------------------------------------------


def node_chain_match(pred_chain: Sequence[str], gold_chain: Sequence[str]) -> int:
    """Longest common subsequence length, computed as an LIS.

    Each predicted element expands to its positions in the gold chain in
    descending order; a strictly increasing subsequence of the expansion can
    then use each predicted element at most once.
    """
    positions: dict[str, list[int]] = defaultdict(list)
    for j, t in enumerate(gold_chain):
        positions[t].append(j)
    tails: list[int] = []
    for t in pred_chain:
        for j in reversed(positions.get(t, ())):
            i = bisect_left(tails, j)
            if i == len(tails):
                tails.append(j)
            else:
                tails[i] = j
    return len(tails)


# -- graph level ------------------------------------------------------------------


@dataclass(frozen=True)
class McisResult:
    size: int
    mapping: tuple[tuple[int, int], ...]
    completed: bool = True
    steps: int = 0


def _adjacency(graph: WorkflowGraph) -> tuple[list[int], list[str], list[list[int]]]:
    ids = graph.ids
    index = {node_id: i for i, node_id in enumerate(ids)}
    adj = [[0] * len(ids) for _ in ids]
    for src, _, dst, _ in graph.edges:
        if src in index:
            s, d = index[src], index[dst]
            adj[s][d] |= 1
            adj[d][s] |= 2
    return ids, [graph.node(i).type_name for i in ids], adj


class _McSplit:
    def __init__(self, g, h, budget):
        self.g_ids, g_labels, self.g_adj = _adjacency(g)
        self.h_ids, h_labels, self.h_adj = _adjacency(h)
        self.budget = budget
        self.steps = 0
        self.truncated = False
        self.best: list[tuple[int, int]] = []
        g_deg = [sum(1 for x in row if x) for row in self.g_adj]
        self.g_rank = sorted(range(len(g_labels)), key=lambda u: (-g_deg[u], u))
        by_label: dict[str, tuple[list, list]] = {}
        for u in range(len(g_labels)):
            by_label.setdefault(g_labels[u], ([], []))[0].append(u)
        for w in range(len(h_labels)):
            if h_labels[w] in by_label:
                by_label[h_labels[w]][1].append(w)
        self.initial = [(gs, hs) for _, (gs, hs) in sorted(by_label.items()) if gs and hs]

    def run(self):
        self._search(self.initial, [])

    def _refine(self, classes, v, w):
        out = []
        for gs, hs in classes:
            gb: dict[int, list[int]] = {}
            hb: dict[int, list[int]] = {}
            for u in gs:
                if u != v:
                    gb.setdefault(self.g_adj[v][u], []).append(u)
            for x in hs:
                if x != w:
                    hb.setdefault(self.h_adj[w][x], []).append(x)
            for key in sorted(gb):
                if key in hb:
                    out.append((gb[key], hb[key]))
        return out

    def _search(self, classes, mapping):
        self.steps += 1
        if self.steps > self.budget:
            self.truncated = True
            return
        if len(mapping) > len(self.best):
            self.best = list(mapping)
        bound = len(mapping) + sum(min(len(gs), len(hs)) for gs, hs in classes)
        if bound <= len(self.best) or not classes:
            return
        ci = min(range(len(classes)), key=lambda i: (max(len(classes[i][0]), len(classes[i][1])), i))
        gs, hs = classes[ci]
        members = set(gs)
        v = next(u for u in self.g_rank if u in members)
        for w in hs:
            mapping.append((v, w))
            self._search(self._refine(classes, v, w), mapping)
            mapping.pop()
            if self.truncated:
                return
        # leave v unmapped
        rest = [u for u in gs if u != v]
        reduced = classes[:ci] + ([(rest, hs)] if rest else []) + classes[ci + 1 :]
        self._search(reduced, mapping)


def mcis(pred: WorkflowGraph, gold: WorkflowGraph, budget: int = DEFAULT_BUDGET, strict: bool = False) -> McisResult:
    """Maximum common induced subgraph of two labeled DAGs.

    Nodes match when their type names are equal; the mapped node sets must
    induce identical directed adjacency (link multiplicity and slots are
    ignored). The common subgraph need not be connected. Exact unless the
    search exceeds ``budget`` steps, in which case ``completed`` is False
    (or BudgetExceeded is raised with ``strict``).
    """
    search = _McSplit(pred, gold, budget)
    search.run()
    mapping = tuple(sorted((search.g_ids[v], search.h_ids[w]) for v, w in search.best))
    result = McisResult(len(mapping), mapping, not search.truncated, search.steps)
    if strict and search.truncated:
        raise BudgetExceeded(result)
    return result


def check_mapping(pred: WorkflowGraph, gold: WorkflowGraph, mapping: Iterable[tuple[int, int]]) -> bool:
    """Independent re-check: injective, type-preserving, induced-edge agreement."""
    mapping = list(mapping)
    left = [a for a, _ in mapping]
    right = [b for _, b in mapping]
    if len(set(left)) != len(left) or len(set(right)) != len(right):
        return False
    if any(a not in pred or b not in gold or pred.node(a).type_name != gold.node(b).type_name for a, b in mapping):
        return False
    p_edges = {(s, d) for s, _, d, _ in pred.edges}
    g_edges = {(s, d) for s, _, d, _ in gold.edges}
    for a1, b1 in mapping:
        for a2, b2 in mapping:
            if ((a1, a2) in p_edges) != ((b1, b2) in g_edges):
                return False
    return True


# -- scoring ----------------------------------------------------------------------


def f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


@dataclass(frozen=True)
class PairScores:
    format_valid: bool
    node_match_len: int = 0
    graph_match_size: int = 0
    node_p: float = 0.0
    node_r: float = 0.0
    node_f1: float = 0.0
    graph_p: float = 0.0
    graph_r: float = 0.0
    graph_f1: float = 0.0
    mcis_completed: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


SCORE_FIELDS = ("node_p", "node_r", "node_f1", "graph_p", "graph_r", "graph_f1")


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def score_pair(pred_code: str, gold, kb, budget: int = DEFAULT_BUDGET) -> PairScores:
    """Compare predicted code against a gold entry (or gold graph). Invalid predictions score zero."""
    if not format_validity(pred_code, kb):
        return PairScores(format_valid=False)
    gold_graph = gold.graph if hasattr(gold, "graph") else gold
    pred = parse_code(pred_code)
    match = node_chain_match(type_chain(pred), type_chain(gold_graph))
    common = mcis(pred, gold_graph, budget)
    node_p, node_r = _ratio(match, len(pred)), _ratio(match, len(gold_graph))
    graph_p, graph_r = _ratio(common.size, len(pred)), _ratio(common.size, len(gold_graph))
    return PairScores(
        True, match, common.size,
        node_p, node_r, f1(node_p, node_r),
        graph_p, graph_r, f1(graph_p, graph_r),
        common.completed,
    )


@dataclass(frozen=True)
class EvalReport:
    pairs: tuple[tuple[str, PairScores], ...]
    means: Mapping[str, float] = field(default_factory=dict)
    counts: Mapping[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "counts": dict(self.counts),
            "means": dict(self.means),
            "pairs": [{"id": pid, **s.to_dict()} for pid, s in self.pairs],
        }


def aggregate(pairs: Iterable[tuple[str, PairScores]]) -> EvalReport:
    rows = sorted(pairs, key=lambda item: item[0])
    if not rows:
        raise EmptyCorpus("no pairs to aggregate")
    n = len(rows)
    means = {"format_validity": sum(s.format_valid for _, s in rows) / n}
    for name in SCORE_FIELDS:
        means[name] = sum(getattr(s, name) for _, s in rows) / n
    counts = {
        "pairs": n,
        "format_valid": sum(s.format_valid for _, s in rows),
        "mcis_truncated": sum(not s.mcis_completed for _, s in rows),
    }
    return EvalReport(tuple(rows), means, counts)


def lcs_dp(a: Sequence[str], b: Sequence[str]) -> int:
    """Quadratic dynamic-programming LCS, kept as a reference oracle."""
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def mcis_brute_force(pred: WorkflowGraph, gold: WorkflowGraph) -> int:
    """Exhaustive backtracking over injective type-preserving maps; reference oracle for small graphs."""
    p_ids, g_ids = pred.ids, gold.ids
    p_edges = {(s, d) for s, _, d, _ in pred.edges}
    g_edges = {(s, d) for s, _, d, _ in gold.edges}
    best = 0

    def consistent(a, b, chosen):
        for a2, b2 in chosen:
            if ((a, a2) in p_edges) != ((b, b2) in g_edges) or ((a2, a) in p_edges) != ((b2, b) in g_edges):
                return False
        return True

    def extend(i, chosen, used):
        nonlocal best
        if len(chosen) + (len(p_ids) - i) <= best:
            return
        if i == len(p_ids):
            best = max(best, len(chosen))
            return
        a = p_ids[i]
        for b in g_ids:
            if b not in used and pred.node(a).type_name == gold.node(b).type_name and consistent(a, b, chosen):
                chosen.append((a, b))
                used.add(b)
                extend(i + 1, chosen, used)
                used.discard(b)
                chosen.pop()
        extend(i + 1, chosen, used)

    extend(0, [], set())
    return best
