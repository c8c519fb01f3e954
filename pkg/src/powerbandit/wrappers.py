"""Power-preserving meta-algorithms for binary-action bandit policies.

All functions are vectorised: propensities, actions and uniforms may be
scalars or arrays (one entry per user). Uniform draws are passed in rather
than drawn here so each wrapper is a pure function of its inputs.

Binary actions are assumed throughout, together with ``pi_min + pi_max == 1``
so that "probability of the favoured action above pi_max" and "probability of
the other action below pi_min" are the same violation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ClipRange:
    pi_min: float
    pi_max: float
    discriminant: float = float("nan")

    def __post_init__(self):
        if not 0.0 < self.pi_min <= self.pi_max < 1.0:
            raise ValueError(f"need 0 < pi_min <= pi_max < 1, got ({self.pi_min}, {self.pi_max})")
        if math.isnan(self.discriminant):
            object.__setattr__(self, "discriminant", self.pi_min * (1.0 - self.pi_min))

    @classmethod
    def symmetric(cls, pi_min: float) -> "ClipRange":
        return cls(pi_min, 1.0 - pi_min)

    def contains(self, pi) -> np.ndarray:
        pi = np.asarray(pi)
        return (pi >= self.pi_min) & (pi <= self.pi_max)


@dataclass
class WrappedStepOutcome:
    """What the wrapper executed and what each party gets to see.

    ``recorded_propensity`` is P(A=1) under the law that actually produced
    ``executed_action``; the scientist stores it. ``algorithm_action`` /
    ``algorithm_propensity`` are what the inner policy is updated with, and
    only where ``share_with_algorithm`` is true.
    """

    executed_action: np.ndarray
    recorded_propensity: np.ndarray
    share_with_algorithm: np.ndarray
    algorithm_action: np.ndarray
    algorithm_propensity: np.ndarray


def clip(pi, clip_range: ClipRange):
    return np.clip(pi, clip_range.pi_min, clip_range.pi_max)


def clip_step(pi_alg, clip_range: ClipRange, u) -> WrappedStepOutcome:
    """Sample from the clipped propensity; the policy sees the clipped value."""
    pi = clip(np.asarray(pi_alg, dtype=float), clip_range)
    a = (np.asarray(u) < pi).astype(np.int64)
    return WrappedStepOutcome(a, pi, np.ones_like(a, dtype=bool), a, pi)


def drop_coupled_step(pi_alg, clip_range: ClipRange, u) -> WrappedStepOutcome:
    """Selective data dropping with a single shared uniform.

    Inside the range the policy's own propensity is used. Otherwise the
    favoured action A* runs with probability pi_max; the step is hidden from
    the policy exactly when a Bernoulli(pi_alg) draw on the same uniform would
    have chosen A* but the clipped draw did not.
    """
    pi_alg = np.asarray(pi_alg, dtype=float)
    u = np.asarray(u, dtype=float)
    inside = clip_range.contains(pi_alg)

    a_star = (pi_alg > 0.5).astype(np.int64)
    p_star = np.maximum(pi_alg, 1.0 - pi_alg)
    agree = u <= clip_range.pi_max
    violated_action = np.where(agree, a_star, 1 - a_star)
    violated_share = agree | (u > p_star)
    violated_prop = np.where(a_star == 1, clip_range.pi_max, clip_range.pi_min)

    action = np.where(inside, (u < pi_alg).astype(np.int64), violated_action)
    share = np.where(inside, True, violated_share)
    recorded = np.where(inside, pi_alg, violated_prop)
    return WrappedStepOutcome(action, recorded, share, action, pi_alg)


def flipped_propensity(pi_alg, clip_range: ClipRange):
    """P(A'=1) after the flip: pi_alg * pi_max + (1 - pi_alg) * pi_min."""
    pi_alg = np.asarray(pi_alg, dtype=float)
    return pi_alg * clip_range.pi_max + (1.0 - pi_alg) * clip_range.pi_min


def flip_action(a_alg, clip_range: ClipRange, u):
    """Replace action 1 by Bernoulli(pi_max) and action 0 by Bernoulli(pi_min)."""
    a_alg = np.asarray(a_alg)
    p = np.where(a_alg == 1, clip_range.pi_max, clip_range.pi_min)
    return (np.asarray(u) < p).astype(np.int64)


def flip_step(pi_alg, clip_range: ClipRange, u_alg, u_flip) -> WrappedStepOutcome:
    """Action flipping: the policy keeps believing it played its own action."""
    pi_alg = np.asarray(pi_alg, dtype=float)
    a_alg = (np.asarray(u_alg) < pi_alg).astype(np.int64)
    executed = flip_action(a_alg, clip_range, u_flip)
    recorded = flipped_propensity(pi_alg, clip_range)
    share = np.ones_like(a_alg, dtype=bool)
    return WrappedStepOutcome(executed, recorded, share, a_alg, pi_alg)


def unwrapped_step(pi_alg, u) -> WrappedStepOutcome:
    pi_alg = np.asarray(pi_alg, dtype=float)
    a = (np.asarray(u) < pi_alg).astype(np.int64)
    return WrappedStepOutcome(a, pi_alg, np.ones_like(a, dtype=bool), a, pi_alg)


WRAPPERS = ("none", "clip", "drop", "flip")


def wrap_step(wrapper: str, pi_alg, clip_range: ClipRange | None, u_action, u_wrapper) -> WrappedStepOutcome:
    """Dispatch on the wrapper name used in study configs."""
    if wrapper == "none":
        return unwrapped_step(pi_alg, u_action)
    if clip_range is None:
        raise ValueError(f"wrapper {wrapper!r} needs a clip range")
    if wrapper == "clip":
        return clip_step(pi_alg, clip_range, u_action)
    if wrapper == "drop":
        return drop_coupled_step(pi_alg, clip_range, u_action)
    if wrapper == "flip":
        return flip_step(pi_alg, clip_range, u_action, u_wrapper)
    raise ValueError(f"unknown wrapper {wrapper!r}; expected one of {WRAPPERS}")
