"""Simulation environments: mobile-health AR(1) simulator, SCB and ASCB.

Every environment follows

    E[R | A, H] = (baseline) + A * Z' delta0,

with the analyst's working model B' gamma for the marginal reward. State is
kept per batch of users; all arrays carry the user axis first so one call
advances every user of a replication (or several replications) at once.

Randomness comes from a per-user tape drawn up front from the user's own
keyed stream, so the draws a user sees do not depend on how users are
batched or in which order they are simulated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .numstats import RngStream, scale_to_sphere
from .wrappers import ClipRange

ENV_KINDS = ("mobile_health", "scb", "ascb")

MOBILE_HEALTH_DELTA = (6.0, -2.48, -2.79)
# same magnitudes with a positive linear term: the effect then peaks at t = 21
# and vanishes at t = 90; selectable through EnvSpec.delta0
MOBILE_HEALTH_DELTA_PEAKED = (6.0, 2.48, -2.79)
SCB_DELTA = (0.382, -0.100, 0.065)
ASCB_DELTA = (0.2, 0.2, 0.2)

DEFAULT_DELTA = {"mobile_health": MOBILE_HEALTH_DELTA, "scb": SCB_DELTA, "ascb": ASCB_DELTA}
DEFAULT_SIGMA2 = {"mobile_health": 900.0, "scb": 0.25, "ascb": 0.25}

AR_PHI = 1.0 / math.sqrt(2.0)
MH_SIGMA = 30.0
MH_WEEKEND_SD_FACTOR = 1.5
MH_ALPHA_START, MH_ALPHA_END = 125.0, 50.0
SCB_RADIUS = 0.4
NOISE_MISESTIMATE = 1.2
EFFECT_MISESTIMATE = 1.1

NOISE_SCENARIOS = ("exact", "under", "over", "weekend")
MARGINAL_MODELS = ("correct", "constant")
EFFECT_MODELS = ("full", "drop_last", "nonlinear")

# tape layout per user and step: two uniforms, four standard normals
N_UNIFORM_SLOTS = 2
N_NORMAL_SLOTS = 4


@dataclass(frozen=True)
class RobustnessScenario:
    effect_scale: float = 1.0
    noise: str = "exact"
    marginal_model: str = "correct"
    effect_model: str = "full"

    def validate(self, kind: str) -> None:
        if self.effect_scale <= 0:
            raise ValueError("effect_scale must be positive")
        if self.noise not in NOISE_SCENARIOS:
            raise ValueError(f"noise scenario must be one of {NOISE_SCENARIOS}")
        if self.marginal_model not in MARGINAL_MODELS:
            raise ValueError(f"marginal_model must be one of {MARGINAL_MODELS}")
        if self.effect_model not in EFFECT_MODELS:
            raise ValueError(f"effect_model must be one of {EFFECT_MODELS}")
        if self.noise == "weekend" and kind != "mobile_health":
            raise ValueError("the weekend noise scenario only exists for mobile_health")
        if self.effect_model == "nonlinear" and kind != "ascb":
            raise ValueError("the nonlinear effect scenario is built on the ascb generator")


@dataclass(frozen=True)
class EnvSpec:
    kind: str
    T: int = 90
    delta0: tuple | None = None
    sigma2: float | None = None
    scenario: RobustnessScenario = field(default_factory=RobustnessScenario)
    null_effect: bool = False

    def __post_init__(self):
        if self.kind not in ENV_KINDS:
            raise ValueError(f"unknown environment {self.kind!r}; expected one of {ENV_KINDS}")
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.delta0 is None:
            object.__setattr__(self, "delta0", DEFAULT_DELTA[self.kind])
        object.__setattr__(self, "delta0", tuple(float(x) for x in self.delta0))
        if len(self.delta0) != 3:
            raise ValueError("delta0 must have 3 entries")
        if self.sigma2 is None:
            object.__setattr__(self, "sigma2", DEFAULT_SIGMA2[self.kind])
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        self.scenario.validate(self.kind)

    p = 3

    @property
    def effect(self) -> np.ndarray:
        """Effect used by the data generator (zero under the null)."""
        return np.zeros(3) if self.null_effect else np.asarray(self.delta0)

    @property
    def delta_est(self) -> np.ndarray:
        """Effect the designer plugs into the power solver."""
        return np.asarray(self.delta0) * self.scenario.effect_scale

    @property
    def analysis_dim(self) -> int:
        return 2 if self.scenario.effect_model in ("drop_last", "nonlinear") else 3

    @property
    def context_dim(self) -> int:
        return 2 if self.scenario.effect_model == "drop_last" else 3

    @property
    def q(self) -> int:
        if self.scenario.marginal_model == "constant":
            return 1
        extra = {"mobile_health": 1, "scb": 2, "ascb": 1}[self.kind]
        return extra + self.analysis_dim

    def with_scenario(self, **changes) -> "EnvSpec":
        return replace(self, scenario=replace(self.scenario, **changes))

    def noise_sd(self, t) -> np.ndarray:
        """Standard deviation sigma(t) of the mobile-health residual step count."""
        t = np.asarray(t)
        sd = np.full(t.shape, MH_SIGMA)
        if self.scenario.noise == "weekend":
            sd = np.where(is_weekend(t), MH_SIGMA * MH_WEEKEND_SD_FACTOR, sd)
        return sd

    def sigma2_at(self, t) -> np.ndarray:
        """Marginal variance of the reward noise at step t."""
        if self.kind == "mobile_health":
            # (sigma(t)/sqrt 2)^2 * Var(eps) with Var(eps) = 1/(1 - phi^2) = 2
            return self.noise_sd(t) ** 2 / 2.0 / (1.0 - AR_PHI**2)
        return np.full(np.shape(t), self.sigma2)

    @property
    def sigma2_est(self) -> float:
        """Noise variance the designer plugs into the power solver."""
        noise = self.scenario.noise
        if noise == "weekend":
            return float(np.mean(self.sigma2_at(np.arange(1, self.T + 1))))
        base = float(np.mean(self.sigma2_at(np.arange(1, self.T + 1))))
        if noise == "under":
            return base / NOISE_MISESTIMATE
        if noise == "over":
            return base * NOISE_MISESTIMATE
        return base


def is_weekend(t) -> np.ndarray:
    return np.isin(np.asarray(t) % 7, (6, 0))


def alpha(t, T: int) -> np.ndarray:
    """Baseline sqrt step count: linear from 125 at t=0 to 50 at t=T."""
    return MH_ALPHA_START - (MH_ALPHA_START - MH_ALPHA_END) * np.asarray(t, dtype=float) / T


def scb_baseline(t) -> np.ndarray:
    return np.asarray(t, dtype=float) / 900.0 - 0.05


def deterministic_features(kind: str, t) -> np.ndarray:
    """Z_t for the environments whose features depend on t only; shape (*t.shape, 3)."""
    t = np.asarray(t, dtype=float)
    if kind == "mobile_health":
        s = (t - 1.0) / 45.0
        return np.stack([np.ones_like(s), s, s * s], axis=-1)
    if kind == "ascb":
        sign = np.where(np.asarray(t) % 2 == 0, 1.0, -1.0)
        return np.stack([np.full_like(t, -0.5), 0.3 * sign, (t / 100.0) ** 2], axis=-1)
    raise ValueError(f"{kind} features are random")


@dataclass
class StepView:
    """Everything observable at step t, before the action is chosen (one row per user)."""

    t: int
    z: np.ndarray
    context: np.ndarray
    analysis_z: np.ndarray
    mean0: np.ndarray
    mean1: np.ndarray


@dataclass
class UserSimState:
    """Per-user simulator state for a batch of users.

    ``uniforms`` (n, T, 2) and ``normals`` (n, T, 4) are each user's random
    tape; ``eps`` is the AR(1) noise state (mobile health only).
    """

    users: np.ndarray
    uniforms: np.ndarray
    normals: np.ndarray
    eps: np.ndarray
    t: int = 0
    z: np.ndarray | None = None

    @classmethod
    def start(cls, env: EnvSpec, streams: list[RngStream]) -> "UserSimState":
        n, T = len(streams), env.T
        uniforms = np.empty((n, T, N_UNIFORM_SLOTS))
        normals = np.empty((n, T, N_NORMAL_SLOTS))
        eps = np.empty(n)
        for i, stream in enumerate(streams):
            g = stream.generator()
            eps[i] = g.standard_normal() * math.sqrt(1.0 / (1.0 - AR_PHI**2))
            uniforms[i] = g.random((T, N_UNIFORM_SLOTS))
            normals[i] = g.standard_normal((T, N_NORMAL_SLOTS))
        users = np.array([s.user for s in streams], dtype=np.int64)
        return cls(users, uniforms, normals, eps)

    @classmethod
    def for_users(cls, env: EnvSpec, seed: int, replication: int, users) -> "UserSimState":
        return cls.start(env, [RngStream(seed, replication, int(u)) for u in users])

    @property
    def n(self) -> int:
        return self.users.size

    def action_uniform(self, t: int) -> np.ndarray:
        return self.uniforms[:, t - 1, 0]

    def wrapper_uniform(self, t: int) -> np.ndarray:
        return self.uniforms[:, t - 1, 1]


def features(env: EnvSpec, t: int, state: UserSimState | None = None) -> np.ndarray:
    """True effect features Z_t; SCB draws them from the users' tapes (shape (n, 3))."""
    if not 1 <= t <= env.T:
        raise ValueError(f"t must lie in 1..{env.T}")
    if env.kind == "scb":
        if state is None:
            raise ValueError("SCB features are random and need a UserSimState")
        return scale_to_sphere(state.normals[:, t - 1, 1:4], SCB_RADIUS)
    z = deterministic_features(env.kind, t)
    return z if state is None else np.broadcast_to(z, (state.n, 3)).copy()


def effect_features_for_analysis(env: EnvSpec, t, z) -> np.ndarray:
    """Features the analyst uses for the treatment effect under the scenario."""
    z = np.asarray(z, dtype=float)
    model = env.scenario.effect_model
    if model == "full":
        return z
    if model == "drop_last":
        return z[..., :-1]
    # nonlinear: analyst fits intercept + slope in t
    t_col = np.broadcast_to(np.asarray(t, dtype=float), z.shape[:-1])
    return np.stack([np.ones_like(t_col), t_col], axis=-1)


def policy_context(env: EnvSpec, z) -> np.ndarray:
    """Context handed to the bandit: the effect features, minus any dropped one."""
    z = np.asarray(z, dtype=float)
    return z[..., :-1] if env.scenario.effect_model == "drop_last" else z


def conditional_means(env: EnvSpec, t: int, z: np.ndarray, eps_prev=None):
    """(E[R|A=0, H], E[R|A=1, H]) per user."""
    effect = z @ env.effect
    if env.kind == "mobile_health":
        base = alpha(t, env.T) + 0.0 * effect
        if eps_prev is not None:
            base = base + env.noise_sd(t) / math.sqrt(2.0) * AR_PHI * eps_prev
        return base, base + effect
    if env.kind == "scb":
        base = scb_baseline(t) + 0.0 * effect
        return base, base + effect
    # ascb: the adversarial term -max(0, A z'delta) only bites when A = 1
    mean0 = np.zeros_like(effect)
    return mean0, effect - np.maximum(0.0, effect)


def observe(env: EnvSpec, state: UserSimState, t: int) -> StepView:
    if t != state.t + 1:
        raise ValueError(f"steps must be taken in order: expected t={state.t + 1}, got {t}")
    z = features(env, t, state)
    state.z = z
    mean0, mean1 = conditional_means(env, t, z, state.eps)
    return StepView(
        t=t,
        z=z,
        context=policy_context(env, z),
        analysis_z=effect_features_for_analysis(env, t, z),
        mean0=mean0,
        mean1=mean1,
    )


def adversary_term(env: EnvSpec, z, action) -> np.ndarray:
    """ASCB's f = -max(0, A z'delta)."""
    return -np.maximum(0.0, np.asarray(action) * (np.asarray(z) @ env.effect))


def working_features(env: EnvSpec, view: StepView, propensity, action=None) -> np.ndarray:
    """Working-model features B for the marginal reward, one row per user."""
    propensity = np.asarray(propensity, dtype=float)
    n = view.z.shape[0]
    if env.scenario.marginal_model == "constant":
        return np.ones((n, 1))
    pz = propensity[:, None] * view.analysis_z
    if env.kind == "mobile_health":
        a = np.full((n, 1), float(alpha(view.t, env.T)))
        return np.hstack([a, pz])
    if env.kind == "scb":
        return np.hstack([np.full((n, 1), float(view.t)), np.ones((n, 1)), pz])
    if action is None:
        raise ValueError("the ascb working model needs the executed action")
    f = adversary_term(env, view.z, action)
    return np.hstack([f[:, None], pz])


def step(env: EnvSpec, state: UserSimState, view: StepView, action, propensity):
    """Sample rewards for the executed actions and build the scientist's records.

    Returns ``(reward, record)`` where ``record`` holds one row per user.
    """
    from .analysis import StepRecord

    t = view.t
    if state.z is None or t != state.t + 1:
        raise ValueError("call observe() for this step first")
    action = np.asarray(action, dtype=np.int64)
    e = state.normals[:, t - 1, 0]
    effect = action * (view.z @ env.effect)
    if env.kind == "mobile_health":
        state.eps = AR_PHI * state.eps + e
        reward = effect + alpha(t, env.T) + env.noise_sd(t) / math.sqrt(2.0) * state.eps
    elif env.kind == "scb":
        reward = scb_baseline(t) + effect + math.sqrt(env.sigma2) * e
    else:
        reward = adversary_term(env, view.z, action) + effect + math.sqrt(env.sigma2) * e
    state.t = t
    b = working_features(env, view, propensity, action)
    record = StepRecord(
        user=state.users.copy(),
        t=t,
        z=view.analysis_z,
        b=b,
        action=action,
        propensity=np.asarray(propensity, dtype=float),
        reward=reward,
    )
    return reward, record


def expected_zzt(env: EnvSpec) -> np.ndarray:
    """E[sum_t Z_t Z_t'] for the design (full, correctly specified) features."""
    if env.kind == "scb":
        return env.T * SCB_RADIUS**2 / env.p * np.eye(env.p)
    z = deterministic_features(env.kind, np.arange(1, env.T + 1))
    return z.T @ z


def oracle_means(mean0, mean1, clip_range: ClipRange):
    """(standard oracle mean, clipped oracle mean) per user."""
    hi = np.maximum(mean0, mean1)
    lo = np.minimum(mean0, mean1)
    return hi, clip_range.pi_max * hi + (1.0 - clip_range.pi_max) * lo
