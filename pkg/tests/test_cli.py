from __future__ import annotations

import json
import shutil

import pytest

from wfkit import grpo
from wfkit.cli import main
from wfkit.codec import parse_json


@pytest.fixture
def corpus(tmp_path, fixture_dir):
    root = tmp_path / "corpus"
    shutil.copytree(fixture_dir, root)
    return root


def test_convert_roundtrip(corpus):
    src = corpus / "workflows" / "wf003.json"
    assert main(["convert", str(src), "-o", str(corpus / "a.wf")]) == 0
    assert main(["convert", str(corpus / "a.wf"), "-o", str(corpus / "b.json")]) == 0
    assert (corpus / "b.json").read_bytes() == src.read_bytes()
    assert (corpus / "a.wf").read_text() == (corpus / "workflows" / "wf003.wf").read_text()


def test_convert_to_stdout(corpus, capsys):
    assert main(["convert", str(corpus / "workflows" / "wf000.wf"), "--stdout"]) == 0
    assert parse_json(capsys.readouterr().out.encode())


def test_convert_rejects_cycle(corpus, capsys):
    assert main(["convert", str(corpus / "corrupt" / "cycle.json"), "--stdout"]) == 2
    assert "cycle" in capsys.readouterr().err.lower()


def test_convert_missing_file(tmp_path):
    assert main(["convert", str(tmp_path / "nope.json")]) == 3


def test_validate(corpus, capsys):
    assert main(["validate", str(corpus / "workflows" / "wf000.json"), "--nodes", str(corpus / "nodes.jsonl")]) == 0
    assert main(["validate", str(corpus / "corrupt" / "cycle.json")]) == 1
    assert main(["validate", str(corpus / "corrupt" / "unknown_node.wf"), "--nodes", str(corpus / "nodes.jsonl")]) == 1
    out = capsys.readouterr().out
    assert '"is_dag": false' in out


def test_clean_kb(corpus, tmp_path, capsys):
    out = tmp_path / "clean"
    args = ["clean-kb", "--nodes", str(corpus / "nodes.jsonl"), "--workflows", str(corpus / "raw_workflows.jsonl"), "--out-dir", str(out)]
    assert main(args) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["workflows"]["rejected"] == 0
    assert (out / "workflows.jsonl").read_bytes() == (corpus / "workflows.jsonl").read_bytes()


def test_candgen_reproducible(corpus, tmp_path):
    gold = corpus / "workflows" / "wf005.json"
    for name in ("a.json", "b.json"):
        assert main(["candgen", "--gold", str(gold), "--kb", str(corpus / "nodes.jsonl"), "--seed", "4", "-o", str(tmp_path / name)]) == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    cand = json.loads((tmp_path / "a.json").read_text())
    assert len(cand["distractors"]) == int(0.8 * len(cand["gold"]))


def test_candgen_gold_outside_kb(corpus, tmp_path):
    (tmp_path / "g.json").write_text('["NotANode"]')
    assert main(["candgen", "--gold", str(tmp_path / "g.json"), "--kb", str(corpus / "nodes.jsonl")]) == 2


def test_reward_cli(corpus, capsys):
    manifest = json.loads((corpus / "manifest.json").read_text())
    gold = next(f for f in manifest["files"] if f["path"].startswith("responses/gold_"))
    cand = str(corpus / gold["candidates"])
    assert main(["reward", "--response", str(corpus / gold["path"]), "--candidates", cand, "--gold", cand]) == 0
    assert json.loads(capsys.readouterr().out)["r_final"] == 1.0
    assert main(["reward", "--response", str(corpus / "corrupt" / "missing_tag.txt"), "--candidates", cand, "--gold", cand]) == 0
    result = json.loads(capsys.readouterr().out)
    assert result["r_final"] == -1.0 and result["veto_reason"] == "format"


def test_reward_batch(tmp_path, capsys):
    row = {"id": "x", "cand": ["A", "B"], "gold": ["A"],
           "response": "<selected_nodes>A</selected_nodes><design_principle>p</design_principle><workflow>node_1 = A()\n</workflow>"}
    (tmp_path / "b.jsonl").write_text(json.dumps(row) + "\n")
    assert main(["reward", "--batch", str(tmp_path / "b.jsonl")]) == 0
    assert json.loads(capsys.readouterr().out)["r_final"] == 1.0


def test_grpo_cli(tmp_path, capsys):
    assert main(["grpo", "--rewards", "1,1,-1,-1"]) == 0
    assert json.loads(capsys.readouterr().out)["advantages"] == [1.0, 1.0, -1.0, -1.0]
    (tmp_path / "g.jsonl").write_text(json.dumps({"id": "g", "rewards": [1, 0], "ratios": [1.5, 1.0], "ref_ratios": [1, 1]}) + "\n")
    assert main(["grpo", "--batch", str(tmp_path / "g.jsonl"), "--group-size", "2", "--kl-beta", "0"]) == 0
    assert abs(json.loads(capsys.readouterr().out)["objective"] - 0.1) < 1e-12
    assert main(["grpo", "--rewards", "1"]) == 2


def test_eval_cli(corpus, tmp_path):
    out = tmp_path / "report.json"
    args = ["eval", "--pred", str(corpus / "preds.jsonl"), "--gold", str(corpus / "workflows.jsonl"), "--nodes", str(corpus / "nodes.jsonl"), "-o", str(out)]
    assert main(args) == 0
    report = json.loads(out.read_text())
    assert report["schema"] == "wfkit.eval/1"
    assert set(report["means"].values()) == {1.0}


def test_retrieve_cli(corpus, tmp_path, capsys):
    samples = [json.loads(line) for line in (corpus / "samples.jsonl").read_text().splitlines()]
    (tmp_path / "q.txt").write_text(samples[2]["instruction"])
    assert main(["retrieve", "--query", str(tmp_path / "q.txt"), "--workflows", str(corpus / "workflows.jsonl"), "--k", "2"]) == 0
    result = json.loads(capsys.readouterr().out)
    assert result["results"][0]["id"] == samples[2]["gold_id"]
    assert len(result["results"]) == 2


def test_pipeline_deterministic(corpus, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["pipeline", "--config", str(corpus / "run.toml"), "-o", str(a)]) == 0
    assert main(["pipeline", "--config", str(corpus / "run.toml"), "-o", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    report = json.loads(a.read_text())
    assert report["schema"] == "wfkit.pipeline/1"
    assert report["counts"]["failures"] == 0
    assert report["stages"]["eval"]["means"]["format_validity"] == 1.0
    assert report["seed"] == 20250613 and len(report["config_hash"]) == 64


def _rewrite_sample(corpus, index, edit):
    lines = (corpus / "samples.jsonl").read_text().splitlines()
    lines[index] = edit(lines[index])
    (corpus / "samples.jsonl").write_text("\n".join(lines) + "\n")
    return len(lines)


def test_pipeline_isolates_truncated_sample(corpus, tmp_path):
    total = _rewrite_sample(corpus, 4, lambda line: line[:20])
    out = tmp_path / "r.json"
    assert main(["pipeline", "--config", str(corpus / "run.toml"), "-o", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["counts"] == {"samples": total, "scored": total - 1, "failures": 1}
    assert report["failures"][0]["line"] == 5 and report["failures"][0]["stage"] == "load"


def test_pipeline_isolates_unknown_gold(corpus, tmp_path):
    def edit(line):
        record = json.loads(line)
        record["gold_id"] = "wf-missing"
        return json.dumps(record)

    _rewrite_sample(corpus, 0, edit)
    out = tmp_path / "r.json"
    assert main(["pipeline", "--config", str(corpus / "run.toml"), "-o", str(out)]) == 0
    failures = json.loads(out.read_text())["failures"]
    assert [(f["line"], f["id"]) for f in failures] == [(1, "s000")]


def test_pipeline_missing_input(corpus):
    (corpus / "samples.jsonl").unlink()
    assert main(["pipeline", "--config", str(corpus / "run.toml")]) == 3


def test_pipeline_bad_config(corpus):
    (corpus / "bad.toml").write_text("seed = [")
    assert main(["pipeline", "--config", str(corpus / "bad.toml")]) == 2


def test_selfcheck_passes(fixture_dir, capsys):
    assert main(["selfcheck", "--fixtures", str(fixture_dir)]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") == 5


def test_selfcheck_catches_mutation(fixture_dir, monkeypatch, capsys):
    monkeypatch.setattr(grpo, "clipped_term", lambda ratio, advantage, eps=0.2: ratio * advantage)
    assert main(["selfcheck", "--fixtures", str(fixture_dir)]) == 1
    assert "FAIL grpo table" in capsys.readouterr().out


def test_selfcheck_catches_clip_bound_off_by_one(fixture_dir, monkeypatch):
    # clipped_term resolves clip through the module, so widening its upper bound is visible
    monkeypatch.setattr(grpo, "clip", lambda x, low, high: min(max(x, low), high + 0.1))
    assert main(["selfcheck", "--fixtures", str(fixture_dir)]) == 1


def test_selfcheck_missing_fixtures(tmp_path):
    assert main(["selfcheck", "--fixtures", str(tmp_path / "none")]) == 3


def test_fixtures_command(tmp_path, fixture_dir):
    assert main(["fixtures", "-o", str(tmp_path / "fx")]) == 0
    assert (tmp_path / "fx" / "manifest.json").read_bytes() == (fixture_dir / "manifest.json").read_bytes()
