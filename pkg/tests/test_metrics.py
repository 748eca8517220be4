from __future__ import annotations

import random

import pytest
from hypothesis import given, settings, strategies as st

from conftest import graph
from wfkit.codec import emit_code
from wfkit.errors import BudgetExceeded, EmptyCorpus
from wfkit.fixtures import random_labeled_dag
from wfkit.kb import load_node_kb, load_workflow_kb
from wfkit.metrics import (
    PairScores,
    aggregate,
    check_mapping,
    f1,
    format_validity,
    lcs_dp,
    mcis,
    mcis_brute_force,
    node_chain_match,
    score_pair,
)

KB = {"Load", "Encode", "Sample", "Save", "A", "B", "C"}


def chain(*types):
    return graph(*((i, t, {"x": (i - 1, 0)} if i > 1 else {}) for i, t in enumerate(types, 1)))


def test_format_validity_examples():
    assert format_validity(emit_code(chain("Load", "Sample", "Save")), KB)
    assert not format_validity(emit_code(chain("Load", "Imagined")), KB)
    assert not format_validity("node_1 = A(x=node_2[0])\nnode_2 = B(x=node_1[0])\n", KB)
    assert not format_validity("node_1 = A(x=node_9[0])\n", KB)
    assert not format_validity("garbage(", KB)


def test_chain_examples():
    assert node_chain_match(list("ABCAB"), list("ABCAB")) == 5
    pred, gold = ["Load", "Sample", "Save"], ["Load", "Encode", "Sample", "Save"]
    assert node_chain_match(pred, gold) == lcs_dp(pred, gold) == 3
    assert node_chain_match(list("AB"), list("CD")) == 0
    assert node_chain_match([], list("AB")) == 0


def test_chain_duplicates_not_reused():
    assert node_chain_match(["A"], ["A", "A", "A"]) == 1
    assert node_chain_match(["A", "A", "A"], ["A"]) == 1
    assert node_chain_match(list("ABAB"), list("BABA")) == 3


labels = st.lists(st.sampled_from("ABCDE"), max_size=30)


@given(labels, labels)
def test_chain_matches_dp_and_is_symmetric(a, b):
    assert node_chain_match(a, b) == lcs_dp(a, b) == node_chain_match(b, a)
    assert node_chain_match(a, a) == len(a)


def test_mcis_examples():
    edge = graph((1, "A"), (2, "B", {"x": (1, 0)}))
    triangle = graph((1, "A"), (2, "B", {"x": (1, 0)}), (3, "C", {"x": (1, 0), "y": (2, 0)}))
    result = mcis(edge, triangle)
    assert result.size == mcis_brute_force(edge, triangle) == 2
    assert sorted(result.mapping) == [(1, 1), (2, 2)]
    assert result.completed
    assert mcis(graph((1, "A")), graph((1, "B"))).size == 0


def test_mcis_is_induced_not_partial():
    # pred has A->B, gold has A and B unconnected: they cannot both map
    pred = graph((1, "A"), (2, "B", {"x": (1, 0)}))
    gold = graph((5, "A"), (6, "B"))
    assert mcis(pred, gold).size == 1


def test_mcis_respects_direction():
    pred = graph((1, "A"), (2, "A", {"x": (1, 0)}))
    gold = graph((1, "A", {"x": (2, 0)}), (2, "A"))
    assert mcis(pred, gold).size == 2
    pred = graph((1, "A"), (2, "B", {"x": (1, 0)}))
    gold = graph((1, "B"), (2, "A", {"x": (1, 0)}))
    assert mcis(pred, gold).size == 1


def test_mcis_identity_on_fixtures(fixture_dir):
    for entry in load_workflow_kb(fixture_dir / "workflows.jsonl"):
        result = mcis(entry.graph, entry.graph)
        assert result.size == len(entry.graph) and result.completed


def test_mcis_budget():
    rng = random.Random(1)
    g = random_labeled_dag(rng, 12, labels=("A",), edge_prob=0.5)
    h = random_labeled_dag(rng, 12, labels=("A",), edge_prob=0.5)
    partial = mcis(g, h, budget=5)
    assert not partial.completed
    assert check_mapping(g, h, partial.mapping)
    with pytest.raises(BudgetExceeded) as info:
        mcis(g, h, budget=5, strict=True)
    assert info.value.result.size == partial.size


def test_mcis_against_brute_force_small():
    rng = random.Random(5)
    for _ in range(60):
        g = random_labeled_dag(rng, rng.randint(0, 8))
        h = random_labeled_dag(rng, rng.randint(0, 8))
        r, back = mcis(g, h), mcis(h, g)
        assert r.size == mcis_brute_force(g, h)
        assert r.size == back.size
        assert r.size <= min(len(g), len(h))
        assert check_mapping(g, h, r.mapping)


def test_check_mapping_rejects_bad_maps():
    g = graph((1, "A"), (2, "B", {"x": (1, 0)}))
    h = graph((1, "A"), (2, "B"))
    assert not check_mapping(g, h, [(1, 1), (2, 2)])
    assert not check_mapping(g, h, [(1, 2)])
    assert not check_mapping(g, h, [(1, 1), (2, 1)])


def test_f1():
    assert f1(0, 0) == 0
    assert f1(1, 1) == 1
    assert f1(1.0, 0.75) == pytest.approx(6 / 7, abs=1e-15)


@given(st.floats(0, 1), st.floats(0, 1))
def test_f1_bounds(p, r):
    v = f1(p, r)
    assert 0 <= v <= 1
    assert min(p, r) - 1e-12 <= v <= max(p, r) + 1e-12
    assert (v == 1) == (p == 1 and r == 1)


def test_score_pair_examples():
    gold = chain("Load", "Encode", "Sample", "Save")
    same = score_pair(emit_code(gold), gold, KB)
    assert same.format_valid
    assert all(getattr(same, f) == 1.0 for f in ("node_p", "node_r", "node_f1", "graph_p", "graph_r", "graph_f1"))

    partial = score_pair(emit_code(chain("Load", "Sample", "Save")), gold, KB)
    assert partial.node_match_len == 3
    assert (partial.node_p, partial.node_r) == (1.0, 0.75)
    assert abs(partial.node_f1 - 6 / 7) < 1e-12

    broken = score_pair("node_1 = (", gold, KB)
    assert broken == PairScores(False)


def test_score_pair_identity_on_fixtures(fixture_dir):
    kb = load_node_kb(fixture_dir / "nodes.jsonl")
    for entry in load_workflow_kb(fixture_dir / "workflows.jsonl"):
        s = score_pair(entry.code, entry, kb)
        assert s.format_valid and s.node_f1 == s.graph_f1 == 1.0


def test_aggregate_examples():
    perfect = PairScores(True, 3, 3, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
    report = aggregate([("a", perfect)])
    assert set(report.means.values()) == {1.0}
    report = aggregate([("z", PairScores(False)), ("a", perfect)])
    assert set(report.means.values()) == {0.5}
    assert [pid for pid, _ in report.pairs] == ["a", "z"]
    assert report.to_dict()["schema"] == "wfkit.eval/1"
    with pytest.raises(EmptyCorpus):
        aggregate([])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32))
def test_mcis_property_symmetric(seed):
    rng = random.Random(seed)
    g = random_labeled_dag(rng, rng.randint(1, 7))
    h = random_labeled_dag(rng, rng.randint(1, 7))
    assert mcis(g, h).size == mcis(h, g).size == mcis_brute_force(g, h)
