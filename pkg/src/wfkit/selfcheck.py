"""Oracle suites run by ``wfkit selfcheck``.

Each suite returns a list of mismatch strings; an empty list means it passed.
Functions are looked up through their modules at call time so a patched
implementation is what gets checked.
"""

from __future__ import annotations

import math
import random
from pathlib import Path

from . import fixtures, grpo, metrics, reward

# (name, gold, selected, expected r_final)
_REWARD_TABLE = [
    ("all gold selected", ["A", "B", "C", "D"], ["A", "B", "C", "D"], 1.0),
    ("half of gold selected", ["A", "B", "C", "D"], ["A", "B"], 0.875),
]


def _response(selected, types):
    lines = [f"node_{i} = {t}()" for i, t in enumerate(types, 1)]
    return (
        "<selected_nodes>" + "\n".join(selected) + "</selected_nodes>"
        "<design_principle>x</design_principle>"
        "<workflow>" + "\n".join(lines) + "\n</workflow>"
    )


def check_reward() -> list[str]:
    problems = []
    cand = ["A", "B", "C", "D", "E"]
    for name, gold, selected, expected in _REWARD_TABLE:
        got = reward.score(_response(selected, selected), cand, gold).r_final
        if got != expected:
            problems.append(f"reward {name}: expected {expected}, got {got}")
    hallucinated = reward.score(_response(["A", "Z"], ["A", "Z"]), cand, ["A"])
    if (hallucinated.r_fidelity, hallucinated.r_final) != (-1, -1.0):
        problems.append(f"reward hallucination: got {hallucinated}")
    cyclic = "<selected_nodes>A\nB</selected_nodes><design_principle>x</design_principle><workflow>node_1 = A(x=node_2[0])\nnode_2 = B(y=node_1[0])\n</workflow>"
    result = reward.score(cyclic, cand, ["A", "B"])
    if (result.r_dag, result.r_final) != (-1, -1.0):
        problems.append(f"reward cycle: got {result}")
    for n_gold in range(1, 9):
        for hit in range(n_gold + 1):
            expected = (4 + (hit / n_gold - 1)) / 4.0
            got = reward.final_reward(0, 0, 0, reward.correctness(range(hit), range(n_gold)))
            if abs(got - expected) > 1e-12:
                problems.append(f"reward sweep |gold|={n_gold} hit={hit}: {got} != {expected}")
    return problems


def check_grpo() -> list[str]:
    problems = []
    for rewards, expected in (([1, 1, -1, -1], [1, 1, -1, -1]), ([0.875] * 4, [0, 0, 0, 0]), ([1, 0], [1, -1])):
        got = grpo.group_advantages(rewards)
        if any(abs(a - b) > 1e-12 for a, b in zip(got, expected)):
            problems.append(f"advantages {rewards}: {got}")
    for args, expected in (((1.5, 1, 0.2), 1.2), ((0.5, -1, 0.2), -0.8), ((1.0, 2, 0.2), 2.0)):
        got = grpo.clipped_term(*args)
        if got != expected:
            problems.append(f"clipped_term{args}: expected {expected}, got {got}")
    for x, expected in ((1.0, 0.0), (2.0, 2 - math.log(2) - 1), (0.5, 0.5 - math.log(0.5) - 1)):
        got = grpo.kl_estimate(x)
        if abs(got - expected) > 1e-9:
            problems.append(f"kl_estimate({x}): {got}")
    samples = [grpo.GroupSample(1, 1.5, 1), grpo.GroupSample(0, 1.0, 1)]
    got = grpo.grpo_objective(samples, grpo.GrpoConfig(group_size=2, clip_eps=0.2, kl_beta=0.0))
    if abs(got - 0.1) > 1e-12:
        problems.append(f"grpo_objective example: expected 0.1, got {got}")
    return problems


def check_lcs(pairs: int = 200, seed: int = 7) -> list[str]:
    rng = random.Random(seed)
    problems = []
    for _ in range(pairs):
        a = [rng.choice("ABCDE") for _ in range(rng.randrange(31))]
        b = [rng.choice("ABCDE") for _ in range(rng.randrange(31))]
        fast, slow = metrics.node_chain_match(a, b), metrics.lcs_dp(a, b)
        if fast != slow:
            problems.append(f"LCS mismatch {''.join(a)} / {''.join(b)}: {fast} != {slow}")
    return problems


def check_mcis(pairs: int = 40, seed: int = 11) -> list[str]:
    rng = random.Random(seed)
    problems = []
    for _ in range(pairs):
        g = fixtures.random_labeled_dag(rng, rng.randint(1, 7))
        h = fixtures.random_labeled_dag(rng, rng.randint(1, 7))
        result = metrics.mcis(g, h)
        expected = metrics.mcis_brute_force(g, h)
        if result.size != expected or not metrics.check_mapping(g, h, result.mapping):
            problems.append(f"MCIS mismatch: got {result.size}, brute force {expected}")
    return problems


def check_fixtures(root) -> list[str]:
    return fixtures.verify_manifest(root)


def run_selfcheck(fixtures_dir) -> tuple[int, list[str]]:
    """Returns (exit code, report lines). Exit 3 when the fixture manifest is absent."""
    root = Path(fixtures_dir)
    if not (root / "manifest.json").exists():
        return 3, [f"fixtures not found: {root / 'manifest.json'} (generate them with `wfkit fixtures -o {root}`)"]
    suites = [
        ("reward table", check_reward),
        ("grpo table", check_grpo),
        ("lcs oracle", check_lcs),
        ("mcis oracle", check_mcis),
        ("fixture manifest", lambda: check_fixtures(root)),
    ]
    lines, failed = [], False
    for name, suite in suites:
        try:
            problems = suite()
        except Exception as exc:  # a crashing suite is a failed suite
            problems = [f"{type(exc).__name__}: {exc}"]
        failed |= bool(problems)
        lines.append(f"{'PASS' if not problems else 'FAIL'} {name}")
        lines.extend(f"    {p}" for p in problems[:10])
    return (1 if failed else 0), lines
