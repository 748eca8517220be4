"""GRPO numerics on supplied probability ratios.

Policies are not evaluated here; callers pass per-sequence ratios
``pi_theta / pi_old`` and ``pi_ref / pi_theta`` directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .errors import GroupTooSmall, NonPositiveRatio


@dataclass(frozen=True)
class GrpoConfig:
    group_size: int = 4
    clip_eps: float = 0.2
    kl_beta: float = 0.001
    std_floor: float = 1e-8

    def __post_init__(self):
        if self.group_size < 2:
            raise GroupTooSmall("group_size must be at least 2")
        if not 0 < self.clip_eps < 1:
            raise ValueError("clip_eps must lie in (0, 1)")
        if self.kl_beta < 0:
            raise ValueError("kl_beta must be non-negative")


@dataclass(frozen=True)
class GroupSample:
    reward: float
    ratio: float = 1.0
    ref_ratio: float = 1.0

    def __post_init__(self):
        _check_ratio(self.ratio)
        _check_ratio(self.ref_ratio)


def _check_ratio(x: float) -> None:
    if not x > 0 or not math.isfinite(x):
        raise NonPositiveRatio(f"probability ratio must be positive and finite, got {x!r}")


def group_advantages(rewards: Sequence[float], std_floor: float = 1e-8) -> list[float]:
    """Standardize rewards within the group using the population std."""
    n = len(rewards)
    if n < 2:
        raise GroupTooSmall(f"a group needs at least 2 rewards, got {n}")
    # exact mean so a constant group yields exact zeros instead of rounding noise scaled by the floor
    mean = sum(map(Fraction, rewards)) / n
    deviations = [float(Fraction(r) - mean) for r in rewards]
    std = math.sqrt(math.fsum(d * d for d in deviations) / n)
    denom = max(std, std_floor)
    return [d / denom for d in deviations]


def clip(x: float, low: float, high: float) -> float:
    return min(max(x, low), high)


def clipped_term(ratio: float, advantage: float, eps: float = 0.2) -> float:
    _check_ratio(ratio)
    return min(ratio * advantage, clip(ratio, 1 - eps, 1 + eps) * advantage)


def kl_estimate(ref_ratio: float) -> float:
    """Non-negative KL estimator ``x - ln x - 1`` with ``x = pi_ref / pi_theta``."""
    _check_ratio(ref_ratio)
    return ref_ratio - math.log(ref_ratio) - 1


def grpo_objective(samples: Sequence[GroupSample], config: GrpoConfig = GrpoConfig()) -> float:
    """Sequence-level clipped surrogate minus the KL penalty, averaged over the group."""
    advantages = group_advantages([s.reward for s in samples], config.std_floor)
    g = len(samples)
    surrogate = math.fsum(clipped_term(s.ratio, a, config.clip_eps) for s, a in zip(samples, advantages)) / g
    kl = math.fsum(kl_estimate(s.ref_ratio) for s in samples) / g
    return surrogate - config.kl_beta * kl
