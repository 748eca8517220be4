"""Synthetic fixture corpus: a node KB, generated workflows, responses and corrupted variants.

Everything is derived from one seed. ``manifest.json`` lists each file with the
outcome every applicable check is expected to produce, so tests can stay
independent of the generated data.
"""

from __future__ import annotations

import json
import random
from pathlib import Path
from typing import Callable

from .codec import emit_code, emit_json, graph_to_api, parse_code, parse_json
from .errors import CodecError
from .ir import LINK, LITERAL, Link, Literal, NodeInstance, NodeSpec, OutputSpec, ParamSpec, WorkflowGraph, node_type_set, topological_order, validate_dag

MANIFEST_SCHEMA = "wfkit.fixtures/1"
DEFAULT_SEED = 20250613
# clean workflow sizes: spans 1..30 with a mean of exactly 21
WORKFLOW_SIZES = (1, 10, 11, 14, 17, 19, 20, 21, 21, 21, 21, 22, 23, 24, 25, 26, 27, 28, 29, 30, 22, 23, 24, 25)
HALLUCINATED_TYPE = "HallucinatedUpscalerXL"
RELAY_TYPE = "Anything Anywhere"

# name, link inputs [(param, type)], literal inputs [(param, type)], outputs [(name, type)]
_CATALOG = [
    ("CheckpointLoaderSimple", [], [("ckpt_name", "COMBO")], [("MODEL", "MODEL"), ("CLIP", "CLIP"), ("VAE", "VAE")]),
    ("LoadImage", [], [("image", "COMBO")], [("IMAGE", "IMAGE"), ("MASK", "MASK")]),
    ("EmptyLatentImage", [], [("width", "INT"), ("height", "INT"), ("batch_size", "INT")], [("LATENT", "LATENT")]),
    ("ControlNetLoader", [], [("control_net_name", "COMBO")], [("CONTROL_NET", "CONTROL_NET")]),
    ("UpscaleModelLoader", [], [("model_name", "COMBO")], [("UPSCALE_MODEL", "UPSCALE_MODEL")]),
    ("CLIPVisionLoader", [], [("clip_name", "COMBO")], [("CLIP_VISION", "CLIP_VISION")]),
    ("VAELoader", [], [("vae_name", "COMBO")], [("VAE", "VAE")]),
    ("UNETLoader", [], [("unet_name", "COMBO"), ("weight_dtype", "COMBO")], [("MODEL", "MODEL")]),
    ("DualCLIPLoader", [], [("clip_name1", "COMBO"), ("clip_name2", "COMBO")], [("CLIP", "CLIP")]),
    ("LoadVideo", [], [("video", "COMBO"), ("frame_load_cap", "INT")], [("IMAGE", "IMAGE")]),
    ("LoraLoader", [("model", "MODEL"), ("clip", "CLIP")], [("lora_name", "COMBO"), ("strength_model", "FLOAT"), ("strength_clip", "FLOAT")], [("MODEL", "MODEL"), ("CLIP", "CLIP")]),
    ("CLIPTextEncode", [("clip", "CLIP")], [("text", "STRING")], [("CONDITIONING", "CONDITIONING")]),
    ("CLIPSetLastLayer", [("clip", "CLIP")], [("stop_at_clip_layer", "INT")], [("CLIP", "CLIP")]),
    ("KSampler", [("model", "MODEL"), ("positive", "CONDITIONING"), ("negative", "CONDITIONING"), ("latent_image", "LATENT")],
     [("seed", "INT"), ("steps", "INT"), ("cfg", "FLOAT"), ("sampler_name", "COMBO"), ("scheduler", "COMBO"), ("denoise", "FLOAT")], [("LATENT", "LATENT")]),
    ("KSamplerAdvanced", [("model", "MODEL"), ("positive", "CONDITIONING"), ("negative", "CONDITIONING"), ("latent_image", "LATENT")],
     [("noise_seed", "INT"), ("steps", "INT"), ("cfg", "FLOAT"), ("add_noise", "BOOLEAN")], [("LATENT", "LATENT")]),
    ("VAEDecode", [("samples", "LATENT"), ("vae", "VAE")], [], [("IMAGE", "IMAGE")]),
    ("VAEEncode", [("pixels", "IMAGE"), ("vae", "VAE")], [], [("LATENT", "LATENT")]),
    ("VAEEncodeForInpaint", [("pixels", "IMAGE"), ("vae", "VAE"), ("mask", "MASK")], [("grow_mask_by", "INT")], [("LATENT", "LATENT")]),
    ("SaveImage", [("images", "IMAGE")], [("filename_prefix", "STRING")], [("IMAGE", "IMAGE")]),
    ("PreviewImage", [("images", "IMAGE")], [], [("IMAGE", "IMAGE")]),
    ("ImageScale", [("image", "IMAGE")], [("upscale_method", "COMBO"), ("width", "INT"), ("height", "INT"), ("crop", "COMBO")], [("IMAGE", "IMAGE")]),
    ("ImageUpscaleWithModel", [("upscale_model", "UPSCALE_MODEL"), ("image", "IMAGE")], [], [("IMAGE", "IMAGE")]),
    ("ControlNetApply", [("conditioning", "CONDITIONING"), ("control_net", "CONTROL_NET"), ("image", "IMAGE")], [("strength", "FLOAT")], [("CONDITIONING", "CONDITIONING")]),
    ("ConditioningCombine", [("conditioning_1", "CONDITIONING"), ("conditioning_2", "CONDITIONING")], [], [("CONDITIONING", "CONDITIONING")]),
    ("ConditioningSetArea", [("conditioning", "CONDITIONING")], [("width", "INT"), ("height", "INT"), ("x", "INT"), ("y", "INT"), ("strength", "FLOAT")], [("CONDITIONING", "CONDITIONING")]),
    ("LatentUpscale", [("samples", "LATENT")], [("upscale_method", "COMBO"), ("width", "INT"), ("height", "INT")], [("LATENT", "LATENT")]),
    ("LatentUpscaleBy", [("samples", "LATENT")], [("upscale_method", "COMBO"), ("scale_by", "FLOAT")], [("LATENT", "LATENT")]),
    ("ImageInvert", [("image", "IMAGE")], [], [("IMAGE", "IMAGE")]),
    ("ImageBlur", [("image", "IMAGE")], [("blur_radius", "INT"), ("sigma", "FLOAT")], [("IMAGE", "IMAGE")]),
    ("ImageSharpen", [("image", "IMAGE")], [("sharpen_radius", "INT"), ("alpha", "FLOAT")], [("IMAGE", "IMAGE")]),
    ("Canny", [("image", "IMAGE")], [("low_threshold", "FLOAT"), ("high_threshold", "FLOAT")], [("IMAGE", "IMAGE")]),
    ("ImageToMask", [("image", "IMAGE")], [("channel", "COMBO")], [("MASK", "MASK")]),
    ("MaskToImage", [("mask", "MASK")], [], [("IMAGE", "IMAGE")]),
    ("GrowMask", [("mask", "MASK")], [("expand", "INT"), ("tapered_corners", "BOOLEAN")], [("MASK", "MASK")]),
    ("SetLatentNoiseMask", [("samples", "LATENT"), ("mask", "MASK")], [], [("LATENT", "LATENT")]),
    ("CLIPVisionEncode", [("clip_vision", "CLIP_VISION"), ("image", "IMAGE")], [("crop", "COMBO")], [("CLIP_VISION_OUTPUT", "CLIP_VISION_OUTPUT")]),
    ("unCLIPConditioning", [("conditioning", "CONDITIONING"), ("clip_vision_output", "CLIP_VISION_OUTPUT")], [("strength", "FLOAT"), ("noise_augmentation", "FLOAT")], [("CONDITIONING", "CONDITIONING")]),
    ("ImageBatch", [("image1", "IMAGE"), ("image2", "IMAGE")], [], [("IMAGE", "IMAGE")]),
    ("RepeatLatentBatch", [("samples", "LATENT")], [("amount", "INT")], [("LATENT", "LATENT")]),
    ("FreeU", [("model", "MODEL")], [("b1", "FLOAT"), ("b2", "FLOAT"), ("s1", "FLOAT"), ("s2", "FLOAT")], [("MODEL", "MODEL")]),
    ("ImageCompositeMasked", [("destination", "IMAGE"), ("source", "IMAGE"), ("mask", "MASK")], [("x", "INT"), ("y", "INT"), ("resize_source", "BOOLEAN")], [("IMAGE", "IMAGE")]),
    ("VHS_VideoCombine", [("images", "IMAGE")], [("frame_rate", "FLOAT"), ("format", "COMBO"), ("filename_prefix", "STRING")], [("Filenames", "VHS_FILENAMES")]),
    ("Image Resize (rgthree)", [("image", "IMAGE")], [("width", "INT"), ("height", "INT"), ("method", "COMBO")], [("IMAGE", "IMAGE"), ("WIDTH", "INT")]),
]

_COMBO_VALUES = ["v1-5-pruned.safetensors", "sdxl_base.safetensors", "nearest-exact", "bilinear", "euler", "dpmpp_2m", "karras", "normal", "red", "center", "clip_l.safetensors", "4x-UltraSharp.pth", "video/h264-mp4", "input.png"]
_WORDS = ["portrait", "landscape", "anime", "cartoon", "photoreal", "cinematic", "watercolor", "sketch", "neon", "vintage", "studio", "product",
          "interior", "fantasy", "cyberpunk", "minimal", "surreal", "macro", "aerial", "night", "sunset", "forest", "ocean", "city", "robot", "cat",
          "dragon", "castle", "flower", "car", "portraiture", "texture", "logo", "poster", "comic", "pixel", "clay", "oil", "ink", "pastel"]
_TASKS = ["text-to-image generation", "image editing", "style transfer", "video generation", "video editing", "inpainting", "upscaling", "outpainting", "image variation", "pose-guided generation"]


def node_catalog() -> list[NodeSpec]:
    specs = []
    for name, links, literals, outputs in _CATALOG:
        inputs = [ParamSpec(p, LINK, t) for p, t in links] + [ParamSpec(p, LITERAL, t) for p, t in literals]
        specs.append(NodeSpec(name, f"{name}: synthetic fixture node.", tuple(inputs), tuple(OutputSpec(o, t) for o, t in outputs)))
    return specs


def _literal(rng: random.Random, kind: str):
    if kind == "INT":
        return rng.choice([0, 1, 4, 8, 20, 512, 768, 1024, rng.randrange(1, 2**32)])
    if kind == "FLOAT":
        return rng.choice([0.0, 0.25, 0.5, 0.75, 1.0, 7.5, 1e-05, round(rng.uniform(0, 2), 3)])
    if kind == "BOOLEAN":
        return rng.random() < 0.5
    if kind == "STRING":
        return rng.choice(["ComfyUI", 'a "quoted" prompt', "line\nbreak", "unicodé ✓", " ".join(rng.sample(_WORDS, 3))])
    return rng.choice(_COMBO_VALUES)


def random_workflow(rng: random.Random, size: int, specs: list[NodeSpec]) -> WorkflowGraph:
    """Grow a DAG node by node; each link input is wired to an earlier producer of the matching type."""
    sources = [s for s in specs if not s.link_params()]
    processors = [s for s in specs if s.link_params()]
    produced: dict[str, list[tuple[int, int]]] = {}
    ids = rng.sample(range(1, 2 * size + 8), size)
    nodes = []
    for step, node_id in enumerate(ids):
        ready = [s for s in processors if all(p.type in produced for p in s.inputs if p.kind == LINK)]
        spec = rng.choice(sources) if step == 0 or not ready or rng.random() < 0.2 else rng.choice(ready)
        bindings = {}
        for p in spec.inputs:
            if p.kind == LINK:
                producers = produced[p.type]
                # bias towards recent producers for longer chains
                src = producers[-1] if rng.random() < 0.6 else rng.choice(producers)
                bindings[p.name] = Link(*src)
            else:
                bindings[p.name] = Literal(_literal(rng, p.type))
        for idx, out in enumerate(spec.outputs):
            produced.setdefault(out.type, []).append((node_id, idx))
        nodes.append(NodeInstance.make(node_id, spec.type_name, bindings))
    return WorkflowGraph.from_nodes(nodes)


def describe(rng: random.Random, graph: WorkflowGraph) -> str:
    types = sorted(node_type_set(graph))
    words = rng.sample(_WORDS, 4)
    return f"{rng.choice(_TASKS).capitalize()} of a {words[0]} {words[1]} scene in {words[2]} {words[3]} style using {', '.join(types[:5])}."


def gold_response(graph: WorkflowGraph, principle: str = "") -> str:
    selected = "\n".join(sorted(node_type_set(graph)))
    principle = principle or "Load the required models first, then encode, sample and decode in dependency order."
    return (
        f"<selected_nodes>\n{selected}\n</selected_nodes>\n"
        f"<design_principle>\n{principle}\n</design_principle>\n"
        f"<workflow>\n{emit_code(graph)}</workflow>\n"
    )


def _with_cycle(rng: random.Random, graph: WorkflowGraph) -> WorkflowGraph:
    """Rewire one link input to a descendant of its own node."""
    order = topological_order(graph)
    succ = graph.successors()
    for node_id in order:
        node = graph.node(node_id)
        if not node.links():
            continue
        seen, stack = set(), list(succ[node_id])
        while stack:
            x = stack.pop()
            if x not in seen:
                seen.add(x)
                stack.extend(succ[x])
        if not seen:
            continue
        target = min(seen)
        param = node.links()[0][0]
        bindings = node.binding_map()
        bindings[param] = Link(target, 0)
        nodes = [NodeInstance.make(node_id, node.type_name, bindings) if n.id == node_id else n for n in graph.nodes]
        return WorkflowGraph.from_nodes(nodes)
    raise ValueError("workflow has no link to rewire")


def _with_relay(graph: WorkflowGraph) -> WorkflowGraph:
    """Insert a denylisted pass-through node on the first link edge."""
    src, idx, dst, param = graph.edges[0]
    relay_id = max(graph.ids) + 1
    nodes = []
    for n in graph.nodes:
        if n.id == dst:
            b = n.binding_map()
            b[param] = Link(relay_id, 0)
            n = NodeInstance.make(n.id, n.type_name, b)
        nodes.append(n)
    nodes.append(NodeInstance.make(relay_id, RELAY_TYPE, {"anything": Link(src, idx)}))
    return WorkflowGraph.from_nodes(nodes)


def _write(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, bytes):
        path.write_bytes(data)
    else:
        path.write_text(data, encoding="utf-8")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False) + "\n"


def generate_fixtures(out_dir, seed: int = DEFAULT_SEED) -> dict:
    """Write the fixture corpus under ``out_dir`` and return the manifest."""
    from .kb import WorkflowEntry, WorkflowKB, clean_nodes, save_kb

    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    rng = random.Random(seed)
    specs = node_catalog()
    kb, _ = clean_nodes(specs)
    files = []

    save_kb(root / "nodes.jsonl", kb)
    files.append({"path": "nodes.jsonl", "kind": "node_kb", "expect": {}})

    graphs, seen = [], set()
    for size in WORKFLOW_SIZES:
        while True:
            g = random_workflow(rng, size, specs)
            key = emit_json(g)
            if key not in seen:
                seen.add(key)
                graphs.append(g)
                break
    descriptions = []
    for g in graphs:
        d = describe(rng, g)
        while d in descriptions:
            d = describe(rng, g)
        descriptions.append(d)

    entries = []
    samples = []
    for i, (g, desc) in enumerate(zip(graphs, descriptions)):
        wid = f"wf{i:03d}"
        entries.append(WorkflowEntry(wid, desc, g, emit_code(g)))
        _write(root / "workflows" / f"{wid}.json", emit_json(g))
        _write(root / "workflows" / f"{wid}.wf", emit_code(g))
        files.append({"path": f"workflows/{wid}.json", "kind": "workflow_json",
                      "expect": {"json_schema": True, "dag": True, "known_nodes": True, "roundtrip": True, "clean": True}})
        files.append({"path": f"workflows/{wid}.wf", "kind": "workflow_code", "expect": {"dag": True, "format_validity": True}})
        samples.append({"id": f"s{i:03d}", "instruction": desc, "gold_id": wid, "response": gold_response(g)})
    save_kb(root / "workflows.jsonl", WorkflowKB(entries))
    files.append({"path": "workflows.jsonl", "kind": "workflow_kb", "expect": {}})
    raw = [{"id": e.id, "description": e.description, "json": json.loads(emit_json(e.graph))} for e in entries]
    _write(root / "raw_workflows.jsonl", "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in raw))
    files.append({"path": "raw_workflows.jsonl", "kind": "raw_workflows", "expect": {"clean_all": True}})
    _write(root / "samples.jsonl", "".join(json.dumps(s, ensure_ascii=False) + "\n" for s in samples))
    files.append({"path": "samples.jsonl", "kind": "samples", "expect": {}})
    preds = [{"id": e.id, "code": e.code} for e in entries]
    _write(root / "preds.jsonl", "".join(json.dumps(p, ensure_ascii=False) + "\n" for p in preds))
    files.append({"path": "preds.jsonl", "kind": "predictions", "expect": {}})

    # gold responses scored against sampled candidate sets
    from .candidate import build_candidate_set, derive_seed

    base = next(i for i, g in enumerate(graphs) if len(g) >= 15)
    for i in (base, base + 1):
        g = graphs[i]
        cand = build_candidate_set(node_type_set(g), kb, 0.8, derive_seed(seed, i))
        _write(root / "responses" / f"cand_{i:03d}.json", _dump(cand.to_dict()))
        _write(root / "responses" / f"gold_{i:03d}.txt", gold_response(g))
        files.append({"path": f"responses/gold_{i:03d}.txt", "kind": "response", "candidates": f"responses/cand_{i:03d}.json",
                      "expect": {"r_format": True, "r_dag": True, "r_fidelity": True}})

    g = graphs[base]
    cand_path = f"responses/cand_{base:03d}.json"
    good = gold_response(g)

    _write(root / "corrupt" / "cycle.json", _dump(graph_to_api(_with_cycle(rng, g))))
    files.append({"path": "corrupt/cycle.json", "kind": "workflow_json", "target": "dag",
                  "expect": {"json_schema": True, "dag": False, "known_nodes": True}})

    sink = topological_order(g)[-1]
    renamed = [NodeInstance(n.id, HALLUCINATED_TYPE, n.bindings) if n.id == sink else n for n in g.nodes]
    _write(root / "corrupt" / "unknown_node.wf", emit_code(WorkflowGraph.from_nodes(renamed)))
    files.append({"path": "corrupt/unknown_node.wf", "kind": "workflow_code", "target": "format_validity",
                  "expect": {"dag": True, "format_validity": False}})

    variants = {
        "missing_tag": ("r_format", good.replace("</design_principle>", "", 1)),
        "duplicate_tag": ("r_format", good + "<selected_nodes>\nLoadImage\n</selected_nodes>\n"),
        "hallucination": ("r_fidelity", gold_response(WorkflowGraph.from_nodes(renamed))),
    }
    for name, (target, text) in variants.items():
        _write(root / "corrupt" / f"{name}.txt", text)
        expect = {"r_format": True, "r_dag": True, "r_fidelity": True}
        expect[target] = False
        files.append({"path": f"corrupt/{name}.txt", "kind": "response", "candidates": cand_path, "target": target, "expect": expect})

    relay = _with_relay(g)
    _write(root / "variants" / "relay.json", emit_json(relay))
    files.append({"path": "variants/relay.json", "kind": "workflow_json",
                  "expect": {"json_schema": True, "dag": True, "known_nodes": False, "clean": True}})

    _write(root / "run.toml", _default_config(seed))
    files.append({"path": "run.toml", "kind": "config", "expect": {}})

    manifest = {"schema": MANIFEST_SCHEMA, "seed": seed, "files": files}
    _write(root / "manifest.json", _dump(manifest))
    return manifest


def _default_config(seed: int) -> str:
    return (
        f"seed = {seed}\n\n"
        "[paths]\n"
        'nodes = "nodes.jsonl"\n'
        'workflows = "workflows.jsonl"\n'
        'samples = "samples.jsonl"\n'
        'output = "report.json"\n\n'
        "[candidates]\n"
        'mode = "retrieval"\n'
        "k = 3\n"
        "ratio = 0.8\n\n"
        "[retrieval]\n"
        'provider = "hashing"\n'
        "dim = 256\n\n"
        "[grpo]\n"
        "group_size = 4\n"
        "clip_eps = 0.2\n"
        "kl_beta = 0.001\n"
        "batch_size = 64\n\n"
        "[kb]\n"
        'denylist = ["Anything Anywhere"]\n'
    )


# -- checks ---------------------------------------------------------------------


def _check_functions(root: Path, kb) -> dict[str, Callable]:
    from .kb import _roundtrips, clean_workflows
    from .metrics import format_validity
    from .reward import score

    def graph_of(path: Path):
        text = path.read_text(encoding="utf-8")
        return parse_json(text) if path.suffix == ".json" else parse_code(text)

    def dag(path, _):
        try:
            return validate_dag(graph_of(path)).is_valid
        except CodecError:
            return False

    def json_schema(path, _):
        try:
            parse_json(path.read_bytes())
            return True
        except CodecError:
            return False

    def known_nodes(path, _):
        return node_type_set(graph_of(path)) <= kb.specs.keys()

    def roundtrip(path, _):
        return _roundtrips(graph_of(path))

    def clean(path, _):
        wkb, _ = clean_workflows([("", path.read_bytes())], kb)
        return len(wkb) == 1

    def clean_all(path, _):
        records = [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
        _, stats = clean_workflows(records, kb)
        return stats.rejected == 0 and stats.retained == len(records)

    def fmt(path, _):
        return format_validity(path.read_text(encoding="utf-8"), kb)

    def reward_component(component):
        def check(path, entry):
            cand = json.loads((root / entry["candidates"]).read_text(encoding="utf-8"))
            breakdown = score(path.read_text(encoding="utf-8"), cand["candidates"], cand["gold"])
            return getattr(breakdown, component) == 0
        return check

    return {
        "dag": dag, "json_schema": json_schema, "known_nodes": known_nodes, "roundtrip": roundtrip,
        "clean": clean, "clean_all": clean_all, "format_validity": fmt,
        "r_format": reward_component("r_format"), "r_dag": reward_component("r_dag"), "r_fidelity": reward_component("r_fidelity"),
    }


def verify_manifest(root) -> list[str]:
    """Re-run every manifest check; return a list of mismatch descriptions (empty when consistent)."""
    from .kb import load_node_kb

    root = Path(root)
    manifest = json.loads((root / "manifest.json").read_text(encoding="utf-8"))
    kb = load_node_kb(root / "nodes.jsonl")
    checks = _check_functions(root, kb)
    problems = []
    for entry in manifest["files"]:
        path = root / entry["path"]
        if not path.exists():
            problems.append(f"{entry['path']}: missing")
            continue
        for check, expected in entry["expect"].items():
            actual = checks[check](path, entry)
            if actual != expected:
                problems.append(f"{entry['path']}: {check} expected {expected}, got {actual}")
    return problems


def random_labeled_dag(rng: random.Random, n: int, labels=("A", "B", "C"), edge_prob: float = 0.35,
                       with_literals: bool = False) -> WorkflowGraph:
    """Random DAG on ids 1..n (edges only from lower to higher position), optionally with literal inputs."""
    ids = rng.sample(range(1, 3 * n + 2), n)
    nodes = []
    for j, node_id in enumerate(ids):
        bindings = {}
        for i in range(j):
            if rng.random() < edge_prob:
                bindings[f"in{i}"] = Link(ids[i], rng.randrange(2))
        if with_literals:
            for k in range(rng.randrange(3)):
                bindings[f"p{k}"] = Literal(_literal(rng, rng.choice(["INT", "FLOAT", "BOOLEAN", "STRING", "COMBO"])))
        nodes.append(NodeInstance.make(node_id, rng.choice(labels), bindings))
    return WorkflowGraph.from_nodes(nodes)
