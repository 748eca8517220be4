"""Acceptance criteria. Each test prints one PASS/FAIL line; the lines are
repeated in the pytest terminal summary. Also runnable as a script."""

from __future__ import annotations

import json
import random
import time
from contextlib import contextmanager

import pytest

from wfkit.candidate import build_candidate_set
from wfkit.codec import emit_code, emit_json, parse_code, parse_json
from wfkit.fixtures import _check_functions, node_catalog, random_labeled_dag, random_workflow
from wfkit.grpo import GroupSample, GrpoConfig, clipped_term, group_advantages, grpo_objective, kl_estimate
from wfkit.kb import clean_nodes, clean_workflows, load_node_kb, load_workflow_kb
from wfkit.metrics import SCORE_FIELDS, lcs_dp, mcis, mcis_brute_force, node_chain_match, score_pair
from wfkit.pipeline import load_config, run_pipeline, write_report
from wfkit.reward import correctness, final_reward, score

RESULTS: list[str] = []


@contextmanager
def criterion(name):
    start = time.perf_counter()
    try:
        yield
    except BaseException as exc:
        line = f"FAIL {name} ({type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''})"
        RESULTS.append(line)
        print(line)
        raise
    line = f"PASS {name} ({time.perf_counter() - start:.2f}s)"
    RESULTS.append(line)
    print(line)


def test_roundtrip(fixture_dir):
    with criterion("round-trip: fixture corpus + 1000 random DAGs, < 10 s"):
        start = time.perf_counter()
        entries = list(load_workflow_kb(fixture_dir / "workflows.jsonl"))
        assert len(entries) >= 20 and any(len(e.graph) == 21 for e in entries)
        graphs = [e.graph for e in entries]
        rng = random.Random(1000)
        specs = node_catalog()
        for i in range(1000):
            if i % 2:
                graphs.append(random_workflow(rng, rng.randint(1, 30), specs))
            else:
                graphs.append(random_labeled_dag(rng, rng.randint(0, 25), labels=("A", "B b", "C-1", "Image Resize (rgthree)"), with_literals=True))
        bad = [g for g in graphs if parse_code(emit_code(g)) != g or parse_json(emit_json(g)) != g]
        elapsed = time.perf_counter() - start
        assert not bad, f"{len(bad)} graphs failed to round-trip"
        assert elapsed < 10, f"took {elapsed:.1f}s"


def _response(selected, types):
    code = "".join(f"node_{i} = {t}()\n" for i, t in enumerate(types, 1))
    return ("<selected_nodes>" + "\n".join(selected) + "</selected_nodes>"
            "<design_principle>x</design_principle><workflow>" + code + "</workflow>")


def test_reward_table():
    with criterion("reward: four scored examples exact, sweep to 1e-12"):
        cand = {"A", "B", "C", "D", "E"}
        assert score(_response("ABCD", "ABCD"), cand, "ABCD").r_final == 1.0
        assert score(_response("AB", "AB"), cand, "ABCD").r_final == 0.875
        fidelity = score(_response("AZ", "AZ"), cand, "A")
        assert (fidelity.r_fidelity, fidelity.r_final) == (-1, -1.0)
        cyclic = ("<selected_nodes>A\nB</selected_nodes><design_principle>x</design_principle>"
                  "<workflow>node_1 = A(x=node_2[0])\nnode_2 = B(y=node_1[0])\n</workflow>")
        dag = score(cyclic, cand, "AB")
        assert (dag.r_dag, dag.r_final) == (-1, -1.0)
        for n_gold in range(1, 9):
            gold = [f"g{i}" for i in range(n_gold)]
            for hit in range(n_gold + 1):
                expected_correct = hit / n_gold - 1
                expected_final = (4 + expected_correct) / 4
                r_correct = correctness(gold[:hit], gold)
                assert abs(r_correct - expected_correct) <= 1e-12
                assert abs(final_reward(0, 0, 0, r_correct) - expected_final) <= 1e-12
                if hit:
                    via_score = score(_response(gold[:hit], gold[:hit]), set(gold), gold).r_final
                    assert abs(via_score - expected_final) <= 1e-12


def test_grpo_numerics():
    with criterion("grpo: advantages, clipped term, KL, objective"):
        for rewards, expected in (([1, 1, -1, -1], [1, 1, -1, -1]), ([0.875] * 4, [0, 0, 0, 0]), ([1, 0], [1, -1])):
            assert all(abs(a - b) <= 1e-12 for a, b in zip(group_advantages(rewards), expected, strict=True))
        assert abs(kl_estimate(2) - 0.30685281944005469) <= 1e-9
        assert clipped_term(1.5, 1, 0.2) == 1.2
        assert clipped_term(0.5, -1, 0.2) == -0.8
        assert clipped_term(1.0, 2, 0.2) == 2.0
        samples = [GroupSample(1, 1.5, 1), GroupSample(0, 1.0, 1)]
        assert abs(grpo_objective(samples, GrpoConfig(group_size=2, clip_eps=0.2, kl_beta=0.0)) - 0.1) <= 1e-12


def test_mcis_oracle():
    with criterion("mcis: 200 random pairs (<= 8 nodes) vs brute force, < 60 s"):
        start = time.perf_counter()
        rng = random.Random(200)
        mismatches = 0
        for _ in range(200):
            labels = rng.choice([("A",), ("A", "B"), ("A", "B", "C")])
            g = random_labeled_dag(rng, rng.randint(1, 8), labels, edge_prob=rng.uniform(0.1, 0.7))
            h = random_labeled_dag(rng, rng.randint(1, 8), labels, edge_prob=rng.uniform(0.1, 0.7))
            result = mcis(g, h)
            mismatches += not result.completed or result.size != mcis_brute_force(g, h)
        elapsed = time.perf_counter() - start
        assert mismatches == 0, f"{mismatches} disagreements"
        assert elapsed < 60, f"took {elapsed:.1f}s"


def test_lcs_oracle():
    with criterion("lcs: 500 random chain pairs vs dynamic programming"):
        rng = random.Random(500)
        duplicates = 0
        for _ in range(500):
            a = [rng.choice("ABCDE") for _ in range(rng.randint(0, 30))]
            b = [rng.choice("ABCDE") for _ in range(rng.randint(0, 30))]
            duplicates += len(set(a)) < len(a)
            assert node_chain_match(a, b) == lcs_dp(a, b), (a, b)
        assert duplicates > 0


def test_metric_identity(fixture_dir):
    with criterion("metrics: score_pair(gold, gold) is perfect on every fixture"):
        kb = load_node_kb(fixture_dir / "nodes.jsonl")
        for entry in load_workflow_kb(fixture_dir / "workflows.jsonl"):
            s = score_pair(emit_code(entry.graph), entry, kb)
            assert s.format_valid, entry.id
            assert all(getattr(s, f) == 1.0 for f in SCORE_FIELDS), entry.id


# which checks apply to which manifest file kind
_CHECKS_BY_KIND = {
    "workflow_json": ("json_schema", "dag", "known_nodes"),
    "workflow_code": ("dag", "format_validity"),
    "response": ("r_format", "r_dag", "r_fidelity"),
}


def test_corrupted_fixtures(fixture_dir):
    with criterion("corrupted fixtures: each variant fails exactly its target"):
        manifest = json.loads((fixture_dir / "manifest.json").read_text())
        checks = _check_functions(fixture_dir, load_node_kb(fixture_dir / "nodes.jsonl"))
        targets = set()
        for entry in manifest["files"]:
            if entry["kind"] not in _CHECKS_BY_KIND or entry["path"].startswith("variants/"):
                continue
            path = fixture_dir / entry["path"]
            failed = [c for c in _CHECKS_BY_KIND[entry["kind"]] if not checks[c](path, entry)]
            expected = [entry["target"]] if "target" in entry else []
            assert failed == expected, f"{entry['path']}: failed {failed}, expected {expected}"
            targets.update(expected)
        assert targets == {"dag", "format_validity", "r_format", "r_fidelity"}


def test_candidate_rule():
    with criterion("candidates: floor(0.8 |gold|) distractors for |gold| 1..30, reproducible"):
        kb = [f"Node{i:03d}" for i in range(200)]
        rng = random.Random(30)
        for n in range(1, 31):
            gold = rng.sample(kb, n)
            first = build_candidate_set(gold, kb, 0.8, seed=n)
            assert len(first.distractors) == (8 * n) // 10, n
            again = build_candidate_set(gold, kb, 0.8, seed=n)
            assert json.dumps(first.to_dict()).encode() == json.dumps(again.to_dict()).encode()


def test_pipeline_determinism(fixture_dir, tmp_path):
    with criterion("pipeline: identical reports from identical config and seed"):
        cfg = load_config(fixture_dir / "run.toml")
        write_report(run_pipeline(cfg), tmp_path / "a.json")
        write_report(run_pipeline(load_config(fixture_dir / "run.toml")), tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_kb_cleaning_idempotent(fixture_dir):
    with criterion("kb cleaning: clean(clean(X)) == clean(X), stats conserved"):
        raw_nodes = [json.loads(line) for line in (fixture_dir / "nodes.jsonl").read_text().splitlines()]
        raw_nodes += raw_nodes[:4] + [{"type_name": "Orphan", "usage": "", "inputs": [], "outputs": []}]
        nodes, node_stats = clean_nodes(raw_nodes)
        nodes2, node_stats2 = clean_nodes([s.to_dict() | {"source": nodes.provenance.get(s.type_name, "")} for s in nodes.specs.values()])
        assert nodes2 == nodes
        assert node_stats.conserved() and node_stats2.conserved() and node_stats2.rejected == 0

        records = [json.loads(line) for line in (fixture_dir / "raw_workflows.jsonl").read_text().splitlines()]
        records += records[:3]
        for extra in ("variants/relay.json", "corrupt/cycle.json", "workflows/wf001.json"):
            records.append({"id": extra, "description": extra, "json": json.loads((fixture_dir / extra).read_text())})
        once, stats = clean_workflows(records, nodes)
        twice, stats2 = clean_workflows([(e.id, e.description, e.canonical_json()) for e in once], nodes)
        assert twice.entries == once.entries
        assert stats.conserved() and stats2.conserved() and stats2.rejected == 0
        # 3 repeats, wf001 again, and the relay variant which strips down to its base workflow
        assert stats.duplicate == 5 and stats.invalid_structure == 1 and stats.nodes_stripped == 1


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
