"""Candidate node sets: gold nodes plus seeded random distractors from the node KB."""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

from .errors import GoldNotInKb


@dataclass(frozen=True)
class CandidateSet:
    gold: frozenset[str]
    distractors: frozenset[str]
    seed: int
    ordered: tuple[str, ...] = ()  # shuffled presentation order of gold | distractors

    @property
    def members(self) -> frozenset[str]:
        return self.gold | self.distractors

    def __contains__(self, type_name: str) -> bool:
        return type_name in self.gold or type_name in self.distractors

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "gold": sorted(self.gold),
            "distractors": sorted(self.distractors),
            "candidates": list(self.ordered),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CandidateSet":
        gold = frozenset(data["gold"])
        distractors = frozenset(data.get("distractors", ()))
        ordered = tuple(data.get("candidates") or sorted(gold | distractors))
        return cls(gold, distractors, int(data.get("seed", 0)), ordered)


def distractor_count(n_gold: int, ratio: float = 0.8) -> int:
    # Fraction(str) keeps 0.8 * n exact, so 0.8 * 5 floors to 4 rather than 3
    return math.floor(Fraction(repr(float(ratio))) * n_gold)


def derive_seed(run_seed: int, index: int) -> int:
    """Per-sample 64-bit seed from a run seed and sample index."""
    digest = hashlib.sha256(f"{run_seed}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def build_candidate_set(gold: Iterable[str], kb_names: Iterable[str], ratio: float = 0.8, seed: int = 0) -> CandidateSet:
    """Sample ``floor(ratio * |gold|)`` distractors uniformly from ``kb_names - gold``.

    Takes every available distractor when the KB is too small.
    ``kb_names`` may be a NodeKB or any iterable of type names.
    """
    if ratio < 0:
        raise ValueError("ratio must be non-negative")
    gold = frozenset(gold)
    names = set(kb_names.specs if hasattr(kb_names, "specs") else kb_names)
    missing = gold - names
    if missing:
        raise GoldNotInKb(missing)
    pool = sorted(names - gold)
    k = min(distractor_count(len(gold), ratio), len(pool))
    rng = random.Random(seed)
    distractors = rng.sample(pool, k)
    ordered = sorted(gold) + sorted(distractors)
    rng.shuffle(ordered)
    return CandidateSet(gold, frozenset(distractors), seed, tuple(ordered))
