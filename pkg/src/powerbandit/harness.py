"""Monte Carlo orchestration: study configs, replications, summaries and reproduction suites.

A replication simulates N users for T steps through policy -> wrapper ->
environment, then analyses the pooled dataset. Replications are grouped
into blocks that are simulated in lock-step (all users of the block at once);
every user's randomness comes from its own keyed stream, so results do not
depend on block size, worker count or scheduling.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import envs as envs_mod
from .analysis import TrialDataset, analyze, metrics
from .envs import EnvSpec, RobustnessScenario, UserSimState
from .numstats import RngStream, SingularMatrix
from .policies import DEFAULT_HYPERPARAMETERS, OfulParams, Policy
from .power import Infeasible, PowerSpec, SolvedRange, solve
from .wrappers import WRAPPERS, ClipRange, wrap_step

log = logging.getLogger(__name__)

THREADS_ENV = "POWERBANDIT_THREADS"
FAILURE_WARN_FRACTION = 0.01


@dataclass
class StudyConfig:
    """One cell of a simulation study.

    ``hyper`` is the policy hyperparameter (fixed propensity, ACTS prior
    variance, BOSE / linUCB eta); ``None`` picks the tuned default, and for
    the fixed policy the string ``"pi_min"`` means the solved lower bound.
    ``clip`` is an explicit ``[pi_min, pi_max]``; ``None`` solves it from the
    design. ``run_test=None`` skips the test only where it is undefined
    (unclipped linUCB).
    """

    env: str = "mobile_health"
    policy: str = "fixed"
    hyper: float | str | None = None
    wrapper: str = "none"
    clip: list | None = None
    S: int = 1000
    N: int = 20
    T: int = 90
    alpha0: float = 0.05
    beta0: float = 0.2
    seed: int = 0
    null_effect: bool = False
    effect_scale: float = 1.0
    noise: str = "exact"
    marginal_model: str = "correct"
    effect_model: str = "full"
    delta0: list | None = None
    sigma2: float | None = None
    feature_map: str = "shared_baseline"
    small_sample_correction: bool = False
    run_test: bool | None = None
    block_size: int = 100

    def __post_init__(self):
        if self.S < 1 or self.N < 1 or self.T < 1:
            raise ValueError("S, N and T must be >= 1")
        if self.wrapper not in WRAPPERS:
            raise ValueError(f"unknown wrapper {self.wrapper!r}; expected one of {WRAPPERS}")
        if self.block_size < 1:
            raise ValueError("block_size must be >= 1")
        self.env_spec()  # validates env / scenario combination
        self.policy_obj(0.5)  # validates the policy name

    @classmethod
    def from_dict(cls, d: dict) -> "StudyConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {unknown}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "StudyConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "StudyConfig":
        return dataclasses.replace(self, **changes)

    def env_spec(self) -> EnvSpec:
        scenario = RobustnessScenario(self.effect_scale, self.noise, self.marginal_model, self.effect_model)
        return EnvSpec(
            kind=self.env,
            T=self.T,
            delta0=None if self.delta0 is None else tuple(self.delta0),
            sigma2=self.sigma2,
            scenario=scenario,
            null_effect=self.null_effect,
        )

    def power_spec(self) -> PowerSpec:
        """Design inputs for the clip-range solver (full effect model, designer's estimates)."""
        env = self.env_spec()
        return PowerSpec(self.alpha0, self.beta0, self.N, self.T, env.sigma2_est, env.delta_est,
                         envs_mod.expected_zzt(env), env.p)

    def policy_obj(self, pi_min: float | None) -> Policy:
        hyper = self.hyper
        if self.policy == "fixed":
            if hyper is None:
                hyper = 0.5
            elif hyper == "pi_min":
                if pi_min is None:
                    raise ValueError("hyper='pi_min' needs a solvable clip range")
                hyper = pi_min
        elif hyper is None:
            hyper = DEFAULT_HYPERPARAMETERS.get(self.policy, {}).get(self.env, 0.0)
        if isinstance(hyper, str):
            raise ValueError(f"string hyperparameter {hyper!r} only allowed for the fixed policy")
        oful = OfulParams()
        if self.policy == "oful":
            env = self.env_spec()
            oful = OfulParams(noise_sd=math.sqrt(env.sigma2_est), S=float(np.linalg.norm(env.delta0)) + 1.0)
        return Policy(self.policy, float(hyper), self.feature_map, oful)

    @property
    def tests_effect(self) -> bool:
        if self.run_test is not None:
            return self.run_test
        return not (self.policy == "linucb" and self.wrapper == "none")


def resolve_clip(config: StudyConfig) -> tuple[ClipRange | None, SolvedRange | None, str]:
    """Clip range for a cell plus the solver output (or the reason it is missing)."""
    if config.clip is not None:
        lo, hi = config.clip
        return ClipRange(float(lo), float(hi)), None, ""
    try:
        solved = solve(config.power_spec())
    except Infeasible as exc:
        return None, None, str(exc)
    return solved.clip_range, solved, ""


def _needs_range(config: StudyConfig) -> bool:
    return config.wrapper != "none" or config.policy in ("oful", "oracle") or config.hyper == "pi_min"


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------

@dataclass
class ReplicationResult:
    replication: int
    statistic: float
    reject: float  # 1.0 / 0.0, nan when the test was skipped or failed
    avg_return: float
    reg: float
    reg_c: float
    failure: str = ""


def simulate_block(config: StudyConfig, replications, clip_range: ClipRange | None, keep_datasets: bool = False):
    """Simulate several replications in lock-step.

    Returns ``(results, datasets)``; ``datasets`` is a list aligned with
    ``replications`` (entries are ``None`` unless ``keep_datasets``).
    """
    env = config.env_spec()
    policy = config.policy_obj(None if clip_range is None else clip_range.pi_min)
    reps = list(replications)
    N, T = config.N, config.T
    streams = [RngStream(config.seed, s, n) for s in reps for n in range(N)]
    state = UserSimState.start(env, streams)
    n_all = len(streams)
    pstate = policy.init_state(n_all, env.context_dim)
    policy_range = clip_range if (config.wrapper == "clip" or config.policy in ("oful", "oracle")) else None
    metric_range = clip_range

    records = []
    std_or = np.empty((n_all, T))
    clip_or = np.empty((n_all, T))
    expected = np.empty((n_all, T))
    rewards = np.empty((n_all, T))
    for t in range(1, T + 1):
        view = envs_mod.observe(env, state, t)
        decision = policy.decide(pstate, view, policy_range)
        out = wrap_step(config.wrapper, decision.propensity, clip_range,
                        state.action_uniform(t), state.wrapper_uniform(t))
        reward, record = envs_mod.step(env, state, view, out.executed_action, out.recorded_propensity)
        policy.update(pstate, view, out.algorithm_action, out.algorithm_propensity, reward,
                      out.share_with_algorithm)
        records.append(record)
        pi = out.recorded_propensity
        std_or[:, t - 1] = np.maximum(view.mean0, view.mean1)
        if metric_range is not None:
            _, clip_or[:, t - 1] = envs_mod.oracle_means(view.mean0, view.mean1, metric_range)
        else:
            clip_or[:, t - 1] = np.nan
        expected[:, t - 1] = pi * view.mean1 + (1.0 - pi) * view.mean0
        rewards[:, t - 1] = reward

    full = TrialDataset.from_records(records)
    results, datasets = [], []
    for i, s in enumerate(reps):
        rows = slice(i * N, (i + 1) * N)
        data = full.subset(rows)
        m = metrics(std_or[rows], clip_or[rows], expected[rows], rewards[rows])
        statistic, reject, failure = math.nan, math.nan, ""
        if config.tests_effect:
            try:
                report = analyze(data, config.alpha0, config.small_sample_correction)
                statistic, reject = report.statistic, float(report.reject)
            except (SingularMatrix, np.linalg.LinAlgError) as exc:
                failure = f"design not identifiable: {exc}"
            except ValueError as exc:
                failure = str(exc)
        results.append(ReplicationResult(s, statistic, reject, m.avg_return, m.reg, m.reg_c, failure))
        datasets.append(data if keep_datasets else None)
    return results, datasets


def run_replication(config: StudyConfig, s: int):
    """Dataset and metrics of replication ``s``; identical to its slot inside run_study."""
    clip_range, _, reason = resolve_clip(config)
    if clip_range is None and _needs_range(config):
        raise Infeasible(reason)
    results, datasets = simulate_block(config, [s], clip_range, keep_datasets=True)
    return datasets[0], results[0]


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------

@dataclass
class MonteCarloSummary:
    label: str
    S: int
    analyzed: int
    failures: int
    reject_rate: float
    reject_ci: float
    avg_return: float
    avg_return_ci: float
    reg: float
    reg_ci: float
    reg_c: float
    reg_c_ci: float
    pi_min: float
    pi_max: float
    c_beta: float
    infeasible: str = ""
    runtime_s: float = field(default=0.0, compare=False)

    CSV_FIELDS = ("label", "S", "analyzed", "failures", "reject_rate", "reject_ci", "avg_return", "avg_return_ci",
                  "reg", "reg_ci", "reg_c", "reg_c_ci", "pi_min", "pi_max", "c_beta", "infeasible")

    def csv_row(self) -> list[str]:
        row = []
        for name in self.CSV_FIELDS:
            v = getattr(self, name)
            row.append("%.17g" % v if isinstance(v, float) else str(v))
        return row


def _mean_ci(values) -> tuple[float, float]:
    vals = [v for v in values if not math.isnan(v)]
    if not vals:
        return math.nan, math.nan
    n = len(vals)
    mean = math.fsum(vals) / n
    if n == 1:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in vals) / (n - 1)
    return mean, 2.0 * math.sqrt(var / n)


def summarize(results: list[ReplicationResult], label: str = "", clip_range=None, solved=None,
              infeasible: str = "") -> MonteCarloSummary:
    results = sorted(results, key=lambda r: r.replication)
    S = len(results)
    decided = [r.reject for r in results if not math.isnan(r.reject)]
    failures = sum(1 for r in results if r.failure)
    if failures > FAILURE_WARN_FRACTION * S:
        log.warning("%s: %d of %d replications could not be analysed", label, failures, S)
    if decided:
        rate = math.fsum(decided) / len(decided)
        rate_ci = 2.0 * math.sqrt(rate * (1.0 - rate) / len(decided))
    else:
        rate = rate_ci = math.nan
    ar = _mean_ci(r.avg_return for r in results)
    reg = _mean_ci(r.reg for r in results)
    reg_c = _mean_ci(r.reg_c for r in results)
    return MonteCarloSummary(
        label=label, S=S, analyzed=len(decided), failures=failures,
        reject_rate=rate, reject_ci=rate_ci,
        avg_return=ar[0], avg_return_ci=ar[1], reg=reg[0], reg_ci=reg[1], reg_c=reg_c[0], reg_c_ci=reg_c[1],
        pi_min=clip_range.pi_min if clip_range else math.nan,
        pi_max=clip_range.pi_max if clip_range else math.nan,
        c_beta=solved.c_beta if solved else math.nan,
        infeasible=infeasible,
    )


def worker_count() -> int:
    cap = os.environ.get(THREADS_ENV)
    n = os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return n


def _block_job(args):
    config, reps, clip_range = args
    results, _ = simulate_block(config, reps, clip_range)
    return results


def run_study_with_results(config: StudyConfig, label: str = "", workers: int | None = None):
    """Summary plus the per-replication results (sorted by replication)."""
    start = time.perf_counter()
    clip_range, solved, reason = resolve_clip(config)
    if clip_range is None and _needs_range(config):
        summary = summarize([], label, infeasible=reason or "no clip range")
        summary.S = config.S
        return summary, []
    blocks = [list(range(i, min(i + config.block_size, config.S))) for i in range(0, config.S, config.block_size)]
    jobs = [(config, reps, clip_range) for reps in blocks]
    workers = worker_count() if workers is None else workers
    results: list[ReplicationResult] = []
    if workers <= 1 or len(jobs) == 1:
        for job in jobs:
            results.extend(_block_job(job))
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            for part in pool.map(_block_job, jobs):
                results.extend(part)
    results.sort(key=lambda r: r.replication)
    summary = summarize(results, label, clip_range, solved, "" if clip_range else reason)
    summary.runtime_s = time.perf_counter() - start
    return summary, results


def run_study(config: StudyConfig, label: str = "", workers: int | None = None) -> MonteCarloSummary:
    return run_study_with_results(config, label, workers)[0]


def replications_csv(results: list[ReplicationResult]) -> str:
    lines = ["replication,statistic,reject,avg_return,reg,reg_c,failure"]
    for r in results:
        vals = [str(r.replication)] + ["%.17g" % v for v in (r.statistic, r.reject, r.avg_return, r.reg, r.reg_c)]
        lines.append(",".join(vals + [json.dumps(r.failure) if r.failure else ""]))
    return "\n".join(lines) + "\n"


def summaries_csv(summaries: list[MonteCarloSummary]) -> str:
    lines = [",".join(MonteCarloSummary.CSV_FIELDS)]
    for s in summaries:
        lines.append(",".join(_csv_escape(v) for v in s.csv_row()))
    return "\n".join(lines) + "\n"


def _csv_escape(v: str) -> str:
    return '"' + v.replace('"', '""') + '"' if ("," in v or '"' in v) else v


def reproduce(suite: str, out_dir, S: int = 1000, seed: int = 0, workers: int | None = None, progress=None):
    """Run every cell of a reproduction suite and write its CSV, markdown and SVG reports."""
    from .suites import reproduce as _reproduce

    return _reproduce(suite, out_dir, S, seed, workers, progress)
