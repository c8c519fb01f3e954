"""Per-user bandit policies: fixed randomization, ACTS, BOSE, linUCB and clipped OFUL.

States are batched: ``V`` has shape (n, d, d) and ``b`` shape (n, d), one
slice per user, so a whole replication (or several) advances in one call.
Small matrix products are written as broadcast sums rather than matmul so a
user's numbers do not depend on the batch it happens to be computed in.

Each ``*_decide`` takes ``clip_range=None`` for the unclipped algorithm.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .wrappers import ClipRange

# unclipped BOSE and ACTS stay inside these instead of reaching exact 0 / 1
# so their data remain analysable by the weighted estimator
UNCLIPPED_LOW = 0.01
UNCLIPPED_HIGH = 0.99
MIN_VARIANCE = 1e-12

# hyperparameters tuned per environment (ACTS prior variance, BOSE / linUCB eta)
DEFAULT_HYPERPARAMETERS = {
    "acts": {"scb": 0.15, "ascb": 0.05, "mobile_health": 60.0},
    "bose": {"scb": 0.2, "ascb": 0.2, "mobile_health": 120.0},
    "linucb": {"scb": 0.03, "ascb": 0.02, "mobile_health": 95.0},
}


def _matvec(M, x):
    return np.sum(M * x[:, None, :], axis=-1)


def _quad(M, x):
    return np.sum(_matvec(M, x) * x, axis=-1)


def _outer(x):
    return x[:, :, None] * x[:, None, :]


@dataclass
class PolicyState:
    """Gram matrix ``V`` (starts at I), response vector ``b`` (starts at 0) per user."""

    V: np.ndarray
    b: np.ndarray
    hyper: float = 0.0
    V_inv: np.ndarray = field(init=False)
    steps: int = 0

    def __post_init__(self):
        self.V_inv = np.linalg.inv(self.V)

    @classmethod
    def fresh(cls, n: int, d: int, hyper: float = 0.0) -> "PolicyState":
        return cls(np.broadcast_to(np.eye(d), (n, d, d)).copy(), np.zeros((n, d)), hyper)

    @property
    def estimate(self) -> np.ndarray:
        """V^{-1} b for every user."""
        return _matvec(self.V_inv, self.b)

    def add(self, weight, x, response, mask=None):
        """V += weight * x x', b += response * x on the rows selected by ``mask``."""
        weight = np.asarray(weight, dtype=float)
        response = np.asarray(response, dtype=float)
        if mask is not None:
            mask = np.asarray(mask, dtype=bool)
            weight = np.where(mask, weight, 0.0)
            response = np.where(mask, response, 0.0)
        self.V = self.V + weight[:, None, None] * _outer(x)
        self.b = self.b + response[:, None] * x
        self.V_inv = np.linalg.inv(self.V)
        self.steps += 1


@dataclass
class Decision:
    """Propensity P(A=1) per user plus which branch of the rule fired."""

    propensity: np.ndarray
    branch: np.ndarray


def _clamp(pi, clip_range):
    if clip_range is None:
        return pi, np.full(pi.shape, "natural", dtype=object)
    branch = np.where(pi > clip_range.pi_max, "pi_max", np.where(pi < clip_range.pi_min, "pi_min", "natural"))
    return np.clip(pi, clip_range.pi_min, clip_range.pi_max), branch.astype(object)


# ---------------------------------------------------------------------------
# fixed randomization
# ---------------------------------------------------------------------------

def fixed_policy(pi: float, n: int = 1) -> Decision:
    if not 0.0 < pi < 1.0:
        raise ValueError(f"fixed propensity must lie in (0, 1), got {pi!r}")
    return Decision(np.full(n, float(pi)), np.full(n, "fixed", dtype=object))


# ---------------------------------------------------------------------------
# action-centered Thompson sampling
# ---------------------------------------------------------------------------

def acts_natural_propensity(state: PolicyState, context) -> np.ndarray:
    """P(sampled effect c' delta > 0) under the posterior N(V^-1 b, sigma0^2 V^-1)."""
    c = np.atleast_2d(np.asarray(context, dtype=float))
    m = np.sum(c * state.estimate, axis=-1)
    v = state.hyper * _quad(state.V_inv, c)
    v = np.where(v > 0, v, MIN_VARIANCE)
    return special.ndtr(m / np.sqrt(v))


def acts_decide(state: PolicyState, context, clip_range: ClipRange | None = None) -> Decision:
    pi = acts_natural_propensity(state, context)
    if clip_range is None:
        floored = (pi < UNCLIPPED_LOW) | (pi > UNCLIPPED_HIGH)
        branch = np.where(floored, "floor", "natural").astype(object)
        return Decision(np.clip(pi, UNCLIPPED_LOW, UNCLIPPED_HIGH), branch)
    return Decision(*_clamp(pi, clip_range))


def acts_update(state: PolicyState, context, action, propensity, reward, mask=None) -> None:
    pi = np.asarray(propensity, dtype=float)
    centred = np.asarray(action, dtype=float) - pi
    state.add(pi * (1.0 - pi), np.atleast_2d(context), centred * np.asarray(reward, dtype=float), mask)


# ---------------------------------------------------------------------------
# bandit orthogonalized semiparametric estimation
# ---------------------------------------------------------------------------

def bose_decide(state: PolicyState, context, clip_range: ClipRange | None = None, eta: float | None = None) -> Decision:
    """pi_max if c'delta > eta c'V^-1 c, pi_min if -c'delta > that, else 1/2."""
    eta = state.hyper if eta is None else eta
    c = np.atleast_2d(np.asarray(context, dtype=float))
    m = np.sum(c * state.estimate, axis=-1)
    width = eta * _quad(state.V_inv, c)
    hi, lo = (UNCLIPPED_HIGH, UNCLIPPED_LOW) if clip_range is None else (clip_range.pi_max, clip_range.pi_min)
    up, down = m > width, -m > width
    pi = np.where(up, hi, np.where(down, lo, 0.5))
    branch = np.where(up, "pi_max", np.where(down, "pi_min", "explore")).astype(object)
    return Decision(pi, branch)


def bose_update(state: PolicyState, context, action, propensity, reward, mask=None) -> None:
    centred = np.asarray(action, dtype=float) - np.asarray(propensity, dtype=float)
    state.add(centred**2, np.atleast_2d(context), centred * np.asarray(reward, dtype=float), mask)


# ---------------------------------------------------------------------------
# linear UCB and clipped OFUL on per-action features
# ---------------------------------------------------------------------------

ACTION_FEATURE_MAPS = ("shared_baseline", "effect_only")


def action_features(context, action, feature_map: str = "shared_baseline") -> np.ndarray:
    """Per-action features C(a).

    ``shared_baseline``: C(a) = [c, a c], so the first block can absorb the
    action-free part of the reward and the second block the effect.
    ``effect_only``: C(1) = c, C(0) = 0.
    """
    c = np.atleast_2d(np.asarray(context, dtype=float))
    a = np.broadcast_to(np.asarray(action, dtype=float), c.shape[:1])[:, None]
    if feature_map == "shared_baseline":
        return np.hstack([c, a * c])
    if feature_map == "effect_only":
        return a * c
    raise ValueError(f"unknown feature map {feature_map!r}; expected one of {ACTION_FEATURE_MAPS}")


def action_feature_dim(context_dim: int, feature_map: str = "shared_baseline") -> int:
    return 2 * context_dim if feature_map == "shared_baseline" else context_dim


def _upper_bound(state: PolicyState, x, radius):
    theta = state.estimate
    width = np.sqrt(np.maximum(_quad(state.V_inv, x), 0.0))
    return np.sum(x * theta, axis=-1) + radius * width


def linucb_decide(state: PolicyState, context, clip_range: ClipRange | None = None, eta: float | None = None,
                  feature_map: str = "shared_baseline") -> Decision:
    """Favour the action with the larger UCB (ties go to action 1)."""
    eta = state.hyper if eta is None else eta
    u1 = _upper_bound(state, action_features(context, 1, feature_map), eta)
    u0 = _upper_bound(state, action_features(context, 0, feature_map), eta)
    best = u1 >= u0
    hi, lo = (1.0, 0.0) if clip_range is None else (clip_range.pi_max, clip_range.pi_min)
    return Decision(np.where(best, hi, lo), np.where(best, "pi_max", "pi_min").astype(object))


def linucb_update(state: PolicyState, context, action, propensity, reward, mask=None,
                  feature_map: str = "shared_baseline") -> None:
    x = action_features(context, action, feature_map)
    state.add(np.ones(x.shape[0]), x, np.asarray(reward, dtype=float), mask)


@dataclass(frozen=True)
class OfulParams:
    """Self-normalised confidence radius inputs."""

    lam: float = 1.0
    S: float = 1.0
    L: float = 1.0
    noise_sd: float = 1.0
    failure_prob: float = 0.01

    def radius(self, t: int, d: int) -> float:
        log_term = 2.0 * math.log(1.0 / self.failure_prob) + d * math.log(1.0 + t * self.L**2 / (self.lam * d))
        return self.noise_sd * math.sqrt(log_term) + math.sqrt(self.lam) * self.S


def clipped_oful_decide(state: PolicyState, context, clip_range: ClipRange, params: OfulParams, t: int,
                        feature_map: str = "shared_baseline") -> Decision:
    """Optimism over the mixed features the constrained policy can actually realise."""
    x1 = action_features(context, 1, feature_map)
    x0 = action_features(context, 0, feature_map)
    hi, lo = clip_range.pi_max, clip_range.pi_min
    mix1 = hi * x1 + (1.0 - hi) * x0
    mix0 = lo * x1 + (1.0 - lo) * x0
    radius = params.radius(max(state.steps, 1) if t is None else t, x1.shape[1])
    best = _upper_bound(state, mix1, radius) >= _upper_bound(state, mix0, radius)
    return Decision(np.where(best, hi, lo), np.where(best, "pi_max", "pi_min").astype(object))


def oracle_decide(mean0, mean1, clip_range: ClipRange) -> Decision:
    """Clipped oracle: the better action with probability pi_max (ties go to 1)."""
    best = np.asarray(mean1) >= np.asarray(mean0)
    return Decision(np.where(best, clip_range.pi_max, clip_range.pi_min),
                    np.where(best, "pi_max", "pi_min").astype(object))


# ---------------------------------------------------------------------------
# uniform interface used by the harness
# ---------------------------------------------------------------------------

POLICIES = ("fixed", "acts", "bose", "linucb", "oful", "oracle")


@dataclass
class Policy:
    """A named policy with its hyperparameter, adapted to the harness loop.

    ``hyper`` is the fixed propensity for ``fixed``, sigma0^2 for ``acts`` and
    eta for ``bose`` / ``linucb``.
    """

    name: str
    hyper: float = 0.5
    feature_map: str = "shared_baseline"
    oful: OfulParams = field(default_factory=OfulParams)

    def __post_init__(self):
        if self.name not in POLICIES:
            raise ValueError(f"unknown policy {self.name!r}; expected one of {POLICIES}")
        if self.feature_map not in ACTION_FEATURE_MAPS:
            raise ValueError(f"unknown feature map {self.feature_map!r}")
        if self.name == "fixed" and not 0.0 < self.hyper < 1.0:
            raise ValueError("fixed propensity must lie in (0, 1)")

    def state_dim(self, context_dim: int) -> int:
        if self.name in ("linucb", "oful"):
            return action_feature_dim(context_dim, self.feature_map)
        return context_dim

    def init_state(self, n: int, context_dim: int) -> PolicyState:
        return PolicyState.fresh(n, self.state_dim(context_dim), self.hyper)

    def decide(self, state: PolicyState, view, clip_range: ClipRange | None) -> Decision:
        n = view.context.shape[0]
        if self.name == "fixed":
            return fixed_policy(self.hyper, n)
        if self.name == "acts":
            return acts_decide(state, view.context, clip_range)
        if self.name == "bose":
            return bose_decide(state, view.context, clip_range)
        if self.name == "linucb":
            return linucb_decide(state, view.context, clip_range, feature_map=self.feature_map)
        if clip_range is None:
            raise ValueError(f"policy {self.name!r} needs a clip range")
        if self.name == "oful":
            return clipped_oful_decide(state, view.context, clip_range, self.oful, view.t, self.feature_map)
        return oracle_decide(view.mean0, view.mean1, clip_range)

    def update(self, state: PolicyState, view, action, propensity, reward, mask=None) -> None:
        if self.name in ("fixed", "oracle"):
            return
        if self.name == "acts":
            acts_update(state, view.context, action, propensity, reward, mask)
        elif self.name == "bose":
            bose_update(state, view.context, action, propensity, reward, mask)
        else:
            linucb_update(state, view.context, action, propensity, reward, mask, self.feature_map)
