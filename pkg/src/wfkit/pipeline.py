"""Run configuration and the end-to-end batch pipeline over externally produced responses."""

from __future__ import annotations

import hashlib
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__
from .candidate import build_candidate_set, derive_seed
from .errors import ConfigError, EmptyCorpus, WorkflowError
from .grpo import GrpoConfig
from .ir import node_type_set
from .kb import DEFAULT_DENYLIST, load_node_kb, load_workflow_kb
from .metrics import PairScores, aggregate, score_pair
from .retrieval import build_index, candidates_from_workflows, make_provider, top_k
from .reward import FormatFailure, parse_response, score

log = logging.getLogger(__name__)

PIPELINE_SCHEMA = "wfkit.pipeline/1"
INPUT_PATHS = ("nodes", "workflows", "samples")


@dataclass
class RunConfig:
    base_dir: Path
    seed: int = 0
    paths: dict = field(default_factory=dict)
    candidate_mode: str = "retrieval"
    k: int = 3
    ratio: float = 0.8
    retrieval: dict = field(default_factory=lambda: {"provider": "hashing", "dim": 256})
    grpo: GrpoConfig = field(default_factory=GrpoConfig)
    batch_size: int = 64
    denylist: tuple = tuple(sorted(DEFAULT_DENYLIST))
    raw: dict = field(default_factory=dict)

    def path(self, key: str) -> Path:
        return self.base_dir / self.paths[key]

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":")).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()

    def provider(self):
        r = self.retrieval
        cache = r.get("cache_dir")
        return make_provider(
            r.get("provider", "hashing"),
            dim=int(r.get("dim", 256)),
            endpoint=r.get("endpoint", ""),
            model=r.get("model", ""),
            api_key_env=r.get("api_key_env"),
            cache_dir=self.base_dir / cache if cache else None,
        )

    def summary(self) -> dict:
        return {
            "seed": self.seed,
            "paths": dict(self.paths),
            "candidates": {"mode": self.candidate_mode, "k": self.k, "ratio": self.ratio},
            "retrieval": dict(self.retrieval),
            "grpo": {"group_size": self.grpo.group_size, "clip_eps": self.grpo.clip_eps,
                     "kl_beta": self.grpo.kl_beta, "batch_size": self.batch_size},
            "denylist": list(self.denylist),
        }


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"bad config {path}: {exc}") from None
    paths = dict(raw.get("paths", {}))
    paths.setdefault("output", "report.json")
    cand = raw.get("candidates", {})
    g = raw.get("grpo", {})
    try:
        cfg = RunConfig(
            base_dir=path.parent.resolve(),
            seed=int(raw.get("seed", 0)),
            paths=paths,
            candidate_mode=cand.get("mode", "retrieval"),
            k=int(cand.get("k", 3)),
            ratio=float(cand.get("ratio", 0.8)),
            retrieval={"provider": "hashing", "dim": 256, **raw.get("retrieval", {})},
            grpo=GrpoConfig(int(g.get("group_size", 4)), float(g.get("clip_eps", 0.2)), float(g.get("kl_beta", 0.001))),
            batch_size=int(g.get("batch_size", 64)),
            denylist=tuple(raw.get("kb", {}).get("denylist", sorted(DEFAULT_DENYLIST))),
            raw=raw,
        )
    except (TypeError, ValueError, WorkflowError) as exc:
        raise ConfigError(f"bad config value: {exc}") from None
    if cfg.candidate_mode not in ("retrieval", "sampled"):
        raise ConfigError(f"candidates.mode must be 'retrieval' or 'sampled', got {cfg.candidate_mode!r}")
    for key in INPUT_PATHS:
        if key not in paths:
            raise ConfigError(f"paths.{key} is required")
        if not cfg.path(key).exists():
            raise ConfigError(f"paths.{key}: {cfg.path(key)} does not exist")
    return cfg


def _read_samples(path: Path):
    for lineno, line in enumerate(path.read_text(encoding="utf-8").split("\n"), 1):
        if line.strip():
            yield lineno, line


def run_pipeline(cfg: RunConfig) -> dict:
    """retrieve -> candidates -> reward -> metrics for each sample, then aggregate.

    A sample that cannot be processed is listed under ``failures`` and the
    run continues.
    """
    node_kb = load_node_kb(cfg.path("nodes"))
    wf_kb = load_workflow_kb(cfg.path("workflows"))
    provider = index = None
    if cfg.candidate_mode == "retrieval":
        provider = cfg.provider()
        index = build_index(wf_kb, provider)

    rows, failures, pairs = [], [], []
    vetoes = {"format": 0, "dag": 0, "fidelity": 0}
    recall_hits = 0
    for position, (lineno, line) in enumerate(_read_samples(cfg.path("samples"))):
        sample_id = None
        stage = "load"
        try:
            record = json.loads(line)
            if not isinstance(record, dict):
                raise ValueError("sample is not an object")
            sample_id = str(record["id"])
            gold_entry = wf_kb.get(str(record["gold_id"]))
            response = record["response"]
            if not isinstance(response, str):
                raise ValueError("response must be a string")
            gold = node_type_set(gold_entry.graph)

            stage = "candidates"
            retrieved = []
            if cfg.candidate_mode == "retrieval":
                retrieved = top_k(record.get("instruction") or gold_entry.description, index, provider, cfg.k)
                cand = candidates_from_workflows([wid for wid, _ in retrieved], wf_kb)
            else:
                cand = build_candidate_set(gold, node_kb, cfg.ratio, derive_seed(cfg.seed, position)).members
            recall_hits += gold <= cand

            stage = "reward"
            breakdown = score(response, cand, gold)
            if breakdown.veto_reason:
                vetoes[breakdown.veto_reason] += 1

            stage = "eval"
            parsed = parse_response(response)
            code = parsed.partial.get("workflow") if isinstance(parsed, FormatFailure) else parsed.workflow_code
            scores = score_pair(code, gold_entry, node_kb) if code is not None else PairScores(False)
        except (ValueError, KeyError, TypeError, WorkflowError) as exc:
            failures.append({"line": lineno, "id": sample_id, "stage": stage, "error": f"{type(exc).__name__}: {exc}"})
            log.warning("sample at line %d failed in %s: %s", lineno, stage, exc)
            continue
        pairs.append((sample_id, scores))
        rows.append({
            "id": sample_id,
            "gold_id": gold_entry.id,
            "retrieved": [{"id": wid, "similarity": sim} for wid, sim in retrieved],
            "candidates": len(cand),
            "reward": breakdown.to_dict(),
            "scores": scores.to_dict(),
        })

    rows.sort(key=lambda r: r["id"])
    try:
        evaluation = aggregate(pairs).to_dict()
        evaluation.pop("pairs")
    except EmptyCorpus:
        evaluation = None
    n = len(rows)
    finals = [r["reward"]["r_final"] for r in rows]
    return {
        "schema": PIPELINE_SCHEMA,
        "toolkit_version": __version__,
        "config_hash": cfg.config_hash,
        "seed": cfg.seed,
        "config": cfg.summary(),
        "counts": {"samples": n + len(failures), "scored": n, "failures": len(failures)},
        "failures": failures,
        "stages": {
            "candidates": {"mode": cfg.candidate_mode, "gold_covered": recall_hits},
            "reward": {
                "mean_r_final": sum(finals) / n if n else None,
                "perfect": sum(1 for f in finals if f == 1.0),
                "vetoes": vetoes,
            },
            "eval": evaluation,
        },
        "samples": rows,
    }


def write_report(report: dict, path) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")
