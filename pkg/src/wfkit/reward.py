"""Tagged-response parsing and the veto-based hybrid reward.

A response must carry ``<selected_nodes>``, ``<design_principle>`` and
``<workflow>`` blocks, each exactly once, in any order. The reward has four
components; format, DAG and fidelity are vetoes (0 or -1) and the fourth
measures gold-node recall. Any veto forces the final reward to -1, otherwise
it is ``(4 + r_correct) / 4``, which lies in [0.75, 1].
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Collection, Optional, Union

from .codec import parse_code
from .errors import CodecError
from .ir import WorkflowGraph, node_type_set, validate_dag

TAGS = ("selected_nodes", "design_principle", "workflow")

VETO_FORMAT = "format"
VETO_DAG = "dag"
VETO_FIDELITY = "fidelity"


@dataclass(frozen=True)
class ParsedResponse:
    selected_nodes: tuple[str, ...]
    design_principle: str
    workflow_code: str
    tag_spans: dict = field(default_factory=dict, compare=False)  # tag -> (start, end) byte offsets of content


@dataclass(frozen=True)
class FormatFailure:
    missing_or_duplicated: tuple[str, ...]
    # contents of tags that did appear exactly once, for diagnostics
    partial: dict = field(default_factory=dict, compare=False)

    def __bool__(self):
        return False


def split_selection(block: str) -> tuple[str, ...]:
    return tuple(item.strip() for item in re.split(r"[\n,]", block) if item.strip())


def _extract(text: str, tag: str) -> Optional[tuple[int, int]]:
    opens = [m.end() for m in re.finditer(re.escape(f"<{tag}>"), text)]
    closes = [m.start() for m in re.finditer(re.escape(f"</{tag}>"), text)]
    if len(opens) != 1 or len(closes) != 1 or closes[0] < opens[0]:
        return None
    return opens[0], closes[0]


def parse_response(text: str) -> Union[ParsedResponse, FormatFailure]:
    spans = {tag: _extract(text, tag) for tag in TAGS}
    bad = tuple(tag for tag in TAGS if spans[tag] is None)
    contents = {tag: text[s:e] for tag, (s, e) in ((t, sp) for t, sp in spans.items() if sp)}
    if bad:
        return FormatFailure(bad, contents)
    byte_spans = {}
    for tag, (s, e) in spans.items():
        start = len(text[:s].encode("utf-8"))
        byte_spans[tag] = (start, start + len(text[s:e].encode("utf-8")))
    return ParsedResponse(
        selected_nodes=split_selection(contents["selected_nodes"]),
        design_principle=contents["design_principle"].strip(),
        workflow_code=contents["workflow"],
        tag_spans=byte_spans,
    )


@dataclass(frozen=True)
class RewardBreakdown:
    r_format: int
    r_dag: int
    r_fidelity: int
    r_correct: float
    r_final: float
    veto_reason: Optional[str] = None
    # components that could not be computed and were reported as 0
    not_evaluable: tuple[str, ...] = ()
    # selected multiset differs from the workflow's node multiset (sets still agree)
    multiset_mismatch: bool = False

    def to_dict(self) -> dict:
        return {
            "r_format": self.r_format,
            "r_dag": self.r_dag,
            "r_fidelity": self.r_fidelity,
            "r_correct": self.r_correct,
            "r_final": self.r_final,
            "veto_reason": self.veto_reason,
            "not_evaluable": list(self.not_evaluable),
            "multiset_mismatch": self.multiset_mismatch,
        }


def correctness(selected: Collection[str], gold: Collection[str]) -> float:
    gold = set(gold)
    return len(set(selected) & gold) / len(gold) - 1


def final_reward(r_format: int, r_dag: int, r_fidelity: int, r_correct: float) -> float:
    if -1 in (r_format, r_dag, r_fidelity):
        return -1.0
    return (4 + r_correct) / 4.0


def _workflow_graph(code: str) -> Optional[WorkflowGraph]:
    try:
        graph = parse_code(code)
    except CodecError:
        return None
    return graph if validate_dag(graph).is_valid else None


def score(response_text: str, cand: Collection[str], gold: Collection[str]) -> RewardBreakdown:
    """Score one response against its candidate set and gold node set.

    ``cand`` may be a CandidateSet or any collection of type names.
    """
    gold = frozenset(gold)
    if not gold:
        raise ValueError("gold node set must be nonempty")
    members = cand.members if hasattr(cand, "members") else frozenset(cand)
    parsed = parse_response(response_text)

    not_evaluable = []
    if isinstance(parsed, FormatFailure):
        r_format = -1
        selection = split_selection(parsed.partial["selected_nodes"]) if "selected_nodes" in parsed.partial else None
        code = parsed.partial.get("workflow")
    else:
        r_format = 0
        selection = parsed.selected_nodes
        code = parsed.workflow_code

    graph = None
    if code is None:
        r_dag = 0
        not_evaluable.append("r_dag")
    else:
        graph = _workflow_graph(code)
        r_dag = 0 if graph is not None else -1

    multiset_mismatch = False
    if selection is None:
        r_fidelity = 0
        not_evaluable.append("r_fidelity")
    else:
        chosen = set(selection)
        invalid = bool(chosen - members)
        if graph is not None:
            used = node_type_set(graph)
            inconsistent = chosen != used
            if not inconsistent:
                counts = {t: 0 for t in used}
                for n in graph.nodes:
                    counts[n.type_name] += 1
                multiset_mismatch = any(selection.count(t) not in (1, counts[t]) for t in used)
        else:
            inconsistent = False
            if not invalid:
                not_evaluable.append("r_fidelity")
        r_fidelity = -1 if invalid or inconsistent else 0

    r_correct = correctness(selection or (), gold)
    r_final = final_reward(r_format, r_dag, r_fidelity, r_correct)
    veto = None
    for reason, value in ((VETO_FORMAT, r_format), (VETO_DAG, r_dag), (VETO_FIDELITY, r_fidelity)):
        if value == -1:
            veto = reason
            break
    return RewardBreakdown(r_format, r_dag, r_fidelity, r_correct, r_final, veto, tuple(not_evaluable), multiset_mismatch)
