"""Command-line entry point.

Exit codes: 0 success, 1 a check failed, 2 unreadable or unparseable input,
3 missing files or fixtures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .candidate import CandidateSet, build_candidate_set
from .codec import emit_code, emit_json, parse_code, parse_json
from .errors import CodecError, ConfigError, CorruptRecord, InvalidGraph, WorkflowError
from .fixtures import DEFAULT_SEED
from .grpo import GroupSample, GrpoConfig, group_advantages, grpo_objective
from .ir import node_type_set, validate_dag
from .kb import clean_nodes, clean_workflows, load_node_kb, load_workflow_kb, save_kb
from .metrics import aggregate, score_pair
from .pipeline import load_config, run_pipeline, write_report
from .retrieval import build_index, candidates_from_workflows, make_provider, top_k
from .reward import FormatFailure, parse_response, score

EXIT_OK, EXIT_FAIL, EXIT_PARSE, EXIT_MISSING = 0, 1, 2, 3


def _err(message: str) -> None:
    print(f"wfkit: {message}", file=sys.stderr)


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False) + "\n"


def _read_jsonl(path):
    rows = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").split("\n"), 1):
        if line.strip():
            try:
                rows.append(json.loads(line))
            except ValueError as exc:
                raise CorruptRecord(lineno, str(exc)) from None
    return rows


def _load_graph(path: Path):
    text = path.read_text(encoding="utf-8")
    return parse_json(text) if path.suffix == ".json" else parse_code(text)


def cmd_convert(args) -> int:
    src = Path(args.input)
    to = args.to or ("code" if src.suffix == ".json" else "json")
    try:
        graph = parse_json(src.read_bytes()) if src.suffix == ".json" else parse_code(src.read_text(encoding="utf-8"))
        text = emit_code(graph) if to == "code" else emit_json(graph).decode("utf-8")
    except (CodecError, InvalidGraph) as exc:
        _err(f"{src}: {exc}")
        return EXIT_PARSE
    out = args.output
    if out is None and not args.stdout:
        out = src.with_suffix(".wf" if to == "code" else ".json")
        if out == src:
            out = src.with_suffix(".canonical.json")
    _emit(text, out)
    return EXIT_OK


def cmd_validate(args) -> int:
    path = Path(args.input)
    try:
        graph = _load_graph(path)
    except CodecError as exc:
        _err(f"{path}: {exc}")
        return EXIT_PARSE
    kb = load_node_kb(args.nodes) if args.nodes else None
    report = validate_dag(graph, kb.specs if kb else None)
    result = report.to_dict()
    result["nodes"] = len(graph)
    if kb is not None:
        result["unknown_types"] = sorted(node_type_set(graph) - kb.specs.keys())
    print(_dumps(result), end="")
    ok = report.is_valid and not result.get("unknown_types")
    if not ok:
        _err(report.describe() if not report.is_valid else "unknown node types: " + ", ".join(result["unknown_types"]))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_clean_kb(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    node_kb, node_stats = clean_nodes(_read_jsonl(args.nodes))
    save_kb(out / "nodes.jsonl", node_kb)
    summary = {"nodes": node_stats.to_dict()}
    if args.workflows:
        kwargs = {"denylist": args.denylist} if args.denylist is not None else {}
        wf_kb, wf_stats = clean_workflows(_read_jsonl(args.workflows), node_kb, **kwargs)
        save_kb(out / "workflows.jsonl", wf_kb)
        summary["workflows"] = wf_stats.to_dict()
    print(_dumps(summary), end="")
    return EXIT_OK


def _gold_types(path) -> frozenset[str]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(data, list):
        return frozenset(data)
    if isinstance(data, dict) and "gold" in data:
        return frozenset(data["gold"])
    return node_type_set(parse_json(json.dumps(data)))


def cmd_candgen(args) -> int:
    gold = _gold_types(args.gold)
    cand = build_candidate_set(gold, load_node_kb(args.kb), args.ratio, args.seed)
    _emit(_dumps(cand.to_dict()), args.output)
    return EXIT_OK


def _candidates(data) -> frozenset[str]:
    if isinstance(data, dict):
        return CandidateSet.from_dict(data).members
    return frozenset(data)


def cmd_reward(args) -> int:
    if args.batch:
        lines = []
        for row in _read_jsonl(args.batch):
            breakdown = score(row["response"], _candidates(row["cand"]), _candidates_gold(row["gold"]))
            lines.append(json.dumps({"id": row.get("id"), **breakdown.to_dict()}, ensure_ascii=False))
        _emit("".join(line + "\n" for line in lines), args.output)
        return EXIT_OK
    if not (args.response and args.candidates and args.gold):
        _err("reward needs --response, --candidates and --gold (or --batch)")
        return EXIT_PARSE
    response = Path(args.response).read_text(encoding="utf-8")
    cand = _candidates(json.loads(Path(args.candidates).read_text(encoding="utf-8")))
    breakdown = score(response, cand, _gold_types(args.gold))
    _emit(_dumps(breakdown.to_dict()), args.output)
    return EXIT_OK


def _candidates_gold(data) -> frozenset[str]:
    return frozenset(data["gold"]) if isinstance(data, dict) else frozenset(data)


def cmd_grpo(args) -> int:
    config = GrpoConfig(max(args.group_size, 2), args.clip_eps, args.kl_beta)
    if args.batch:
        lines = []
        for row in _read_jsonl(args.batch):
            rewards = row["rewards"]
            ratios = row.get("ratios") or [1.0] * len(rewards)
            refs = row.get("ref_ratios") or [1.0] * len(rewards)
            samples = [GroupSample(r, a, b) for r, a, b in zip(rewards, ratios, refs)]
            lines.append(json.dumps({
                "id": row.get("id"),
                "advantages": group_advantages(rewards, config.std_floor),
                "objective": grpo_objective(samples, config),
            }))
        _emit("".join(line + "\n" for line in lines), args.output)
        return EXIT_OK
    if not args.rewards:
        _err("grpo needs --rewards or --batch")
        return EXIT_PARSE
    rewards = [float(x) for x in args.rewards.split(",")]
    print(json.dumps({"advantages": group_advantages(rewards, config.std_floor)}))
    return EXIT_OK


def cmd_eval(args) -> int:
    node_kb = load_node_kb(args.nodes)
    gold_kb = load_workflow_kb(args.gold)
    pairs = []
    for row in _read_jsonl(args.pred):
        code = row.get("code")
        if code is None and "response" in row:
            parsed = parse_response(row["response"])
            code = parsed.partial.get("workflow") if isinstance(parsed, FormatFailure) else parsed.workflow_code
        gold_id = str(row.get("gold_id", row["id"]))
        pairs.append((str(row["id"]), score_pair(code or "", gold_kb.get(gold_id), node_kb)))
    report = aggregate(pairs).to_dict()
    report["toolkit_version"] = __version__
    _emit(_dumps(report), args.output)
    return EXIT_OK


def cmd_retrieve(args) -> int:
    if args.config:
        cfg = load_config(args.config)
        provider = cfg.provider()
        workflows = args.workflows or cfg.path("workflows")
    else:
        provider = make_provider(args.provider, dim=args.dim, endpoint=args.endpoint or "", model=args.model or "",
                                 api_key_env=args.api_key_env, cache_dir=args.cache_dir)
        workflows = args.workflows
    if not workflows:
        _err("retrieve needs --workflows or --config")
        return EXIT_PARSE
    kb = load_workflow_kb(workflows)
    query = Path(args.query).read_text(encoding="utf-8") if args.query != "-" else sys.stdin.read()
    hits = top_k(query.strip(), build_index(kb, provider), provider, args.k)
    result = {
        "results": [{"id": wid, "similarity": sim} for wid, sim in hits],
        "candidates": sorted(candidates_from_workflows([wid for wid, _ in hits], kb)),
    }
    _emit(_dumps(result), args.output)
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = load_config(args.config)
    report = run_pipeline(cfg)
    out = Path(args.output) if args.output else cfg.path("output")
    write_report(report, out)
    counts = report["counts"]
    print(f"scored {counts['scored']} samples, {counts['failures']} failures -> {out}")
    return EXIT_OK


def cmd_selfcheck(args) -> int:
    from .selfcheck import run_selfcheck

    code, lines = run_selfcheck(args.fixtures)
    stream = sys.stderr if code == EXIT_MISSING else sys.stdout
    for line in lines:
        print(line, file=stream)
    return code


def cmd_fixtures(args) -> int:
    from .fixtures import generate_fixtures

    manifest = generate_fixtures(args.output, args.seed)
    print(f"wrote {len(manifest['files'])} fixture files to {args.output}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wfkit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"wfkit {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="convert between workflow JSON and code")
    p.add_argument("input")
    p.add_argument("--to", choices=["code", "json"])
    p.add_argument("-o", "--output")
    p.add_argument("--stdout", action="store_true", help="write to stdout instead of a sibling file")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("validate", help="structural check of a .json or .wf workflow")
    p.add_argument("input")
    p.add_argument("--nodes", help="node KB (JSONL) for type and arity checks")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("clean-kb", help="clean raw node and workflow records")
    p.add_argument("--nodes", required=True)
    p.add_argument("--workflows")
    p.add_argument("--denylist", nargs="*", help="node types to strip (default: 'Anything Anywhere')")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_clean_kb)

    p = sub.add_parser("candgen", help="build a candidate node set")
    p.add_argument("--gold", required=True, help="JSON list of type names, or a workflow JSON")
    p.add_argument("--kb", required=True)
    p.add_argument("--ratio", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_candgen)

    p = sub.add_parser("reward", help="score a tagged response")
    p.add_argument("--response")
    p.add_argument("--candidates")
    p.add_argument("--gold")
    p.add_argument("--batch", help="JSONL of {id, response, cand, gold}")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_reward)

    p = sub.add_parser("grpo", help="group advantages and objective")
    p.add_argument("--rewards", help="comma-separated rewards")
    p.add_argument("--batch", help="JSONL of {id, rewards, ratios, ref_ratios}")
    p.add_argument("--group-size", type=int, default=4)
    p.add_argument("--clip-eps", type=float, default=0.2)
    p.add_argument("--kl-beta", type=float, default=0.001)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_grpo)

    p = sub.add_parser("eval", help="node- and graph-level P/R/F1 of predictions")
    p.add_argument("--pred", required=True, help="JSONL of {id, code} or {id, response}")
    p.add_argument("--gold", required=True, help="workflow KB JSONL")
    p.add_argument("--nodes", required=True)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("retrieve", help="top-k workflows for a query and their aggregated nodes")
    p.add_argument("--query", required=True, help="text file, or - for stdin")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--workflows")
    p.add_argument("--config")
    p.add_argument("--provider", default="hashing", choices=["hashing", "remote"])
    p.add_argument("--dim", type=int, default=256)
    p.add_argument("--endpoint")
    p.add_argument("--model")
    p.add_argument("--api-key-env")
    p.add_argument("--cache-dir")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("pipeline", help="end-to-end scoring run from a TOML config")
    p.add_argument("--config", required=True)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("selfcheck", help="run the oracle suites")
    p.add_argument("--fixtures", default="fixtures")
    p.set_defaults(func=cmd_selfcheck)

    p = sub.add_parser("fixtures", help="generate the synthetic fixture corpus")
    p.add_argument("-o", "--output", default="fixtures")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_fixtures)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        _err(str(exc))
        return EXIT_MISSING
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_MISSING if "does not exist" in str(exc) else EXIT_PARSE
    except (WorkflowError, ValueError, KeyError, OSError) as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
