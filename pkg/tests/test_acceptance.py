"""Acceptance gate: one pass/fail line per criterion, at full study scale (N=20, T=90, S=1000).

Run with ``pytest tests/test_acceptance.py -v`` (lines are echoed in the
terminal summary) or directly with ``python tests/test_acceptance.py``.
"""
import json
import math
import os
import subprocess
import sys
import tempfile
import time

import numpy as np
import pytest

from powerbandit import reference as ref
from powerbandit.analysis import TrialDataset, fit_wls, sandwich_cov
from powerbandit.harness import StudyConfig, run_study
from powerbandit.numstats import chi2_inv, noncentral_chi2_cdf, solve_c_beta
from powerbandit.suites import solved_pi_rows
from powerbandit.wrappers import ClipRange, clip_step, drop_coupled_step, flip_step

try:
    from conftest import ACCEPTANCE_LINES
except ImportError:  # run as a script
    ACCEPTANCE_LINES = []

S = 1000
ENVS = ("mobile_health", "scb", "ascb")
CLIPPED = ("acts", "bose", "linucb")

# tolerances
FIXED_PI_MIN_POWER_BAND = (0.75, 0.88)
CELL_RUNTIME_LIMIT_S = 300.0
TYPE1_BAND = (0.03, 0.10)
FIXED_HALF_POWER = {"mobile_health": 0.911, "scb": 0.931, "ascb": 0.925}
FIXED_HALF_POWER_TOL = 0.04
CLIPPED_POWER_FLOOR = 0.75
ASCB_UNCLIPPED_POWER_CEIL = 0.45
SOLVED_PI_TOL = 0.03
SOLVED_PI_TOL_MOBILE = 0.05
SYMMETRY_TOL = 1e-12
MH_FIXED_REG_C = 117.0
MH_FIXED_REG_C_TOL = 30.0
MH_CLIPPED_REG_C_CEIL = 30.0
MARGINAL_POWER_TOL = 0.05
DROP_LINUCB_POWER_CEIL = 0.55
WLS_TOL = 1e-8
NCX2_MC_TOL = 3e-3
C_BETA_TARGET, C_BETA_TOL = 10.90, 0.05
WRAPPER_CAL_TOL = 0.002

_cache: dict = {}


def cell(**kw):
    key = json.dumps(kw, sort_keys=True)
    if key not in _cache:
        _cache[key] = run_study(StudyConfig(S=S, **kw))
    return _cache[key]


def clipped(env, policy, **kw):
    return cell(env=env, policy=policy, wrapper="clip", **kw)


def report(number, title, ok, details):
    line = f"[{number}] {title}: {'PASS' if ok else 'FAIL'} | {details}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


def _rate(s):
    return "infeasible" if s.infeasible else f"{s.reject_rate:.3f}"


def test_fixed_pi_min_reaches_target_power():
    lo, hi = FIXED_PI_MIN_POWER_BAND
    parts, ok = [], True
    for env in ENVS:
        start = time.perf_counter()
        s = cell(env=env, policy="fixed", hyper="pi_min")
        elapsed = time.perf_counter() - start
        good = not s.infeasible and lo <= s.reject_rate <= hi and elapsed < CELL_RUNTIME_LIMIT_S
        ok &= good
        parts.append(f"{env} pi_min={s.pi_min:.3f} power={_rate(s)} ({elapsed:.0f}s)")
    assert report(1, "power at fixed pi_min in [0.75, 0.88]", ok, "; ".join(parts))


def test_type1_error():
    cols = [("fixed", "none", 0), ("acts", "none", 1), ("acts", "clip", 2), ("bose", "none", 3), ("bose", "clip", 4),
            ("linucb", "clip", 5)]
    lo, hi = TYPE1_BAND
    parts, ok = [], True
    for env in ENVS:
        for policy, wrapper, j in cols:
            s = cell(env=env, policy=policy, wrapper=wrapper, null_effect=True)
            published = ref.TYPE1[env][j][0]
            se = math.sqrt(published * (1 - published) / S)
            good = lo <= s.reject_rate <= hi and abs(s.reject_rate - published) <= 3 * se
            ok &= good
            tag = policy + ("+clip" if wrapper == "clip" else "")
            parts.append(f"{env}/{tag}={_rate(s)}{'' if good else '!'}")
    assert report(2, "type 1 error in [0.03, 0.10] and within 3 SE of published", ok, " ".join(parts))


def test_power_table():
    parts, ok = [], True
    for env in ENVS:
        s = cell(env=env, policy="fixed")
        good = abs(s.reject_rate - FIXED_HALF_POWER[env]) <= FIXED_HALF_POWER_TOL
        ok &= good
        parts.append(f"{env}/fixed={_rate(s)}{'' if good else '!'}")
    for env in ENVS:
        for policy in CLIPPED:
            s = clipped(env, policy)
            good = not s.infeasible and s.reject_rate >= CLIPPED_POWER_FLOOR
            ok &= good
            parts.append(f"{env}/{policy}+clip={_rate(s)}{'' if good else '!'}")
    for policy in ("acts", "bose"):
        s = cell(env="ascb", policy=policy)
        good = s.reject_rate <= ASCB_UNCLIPPED_POWER_CEIL
        ok &= good
        parts.append(f"ascb/{policy}={_rate(s)}{'' if good else '!'}")
    assert report(3, "power table (fixed +-0.04, clipped >= 0.75, unclipped ascb <= 0.45)", ok, " ".join(parts))


def test_solved_clip_ranges():
    rows = solved_pi_rows("effect") + solved_pi_rows("noise")
    parts, ok = [], True
    for r in rows:
        tol = SOLVED_PI_TOL_MOBILE if r.env == "mobile_health" else SOLVED_PI_TOL
        feasible = not r.infeasible
        good = feasible and abs(r.pi_min - r.reference) <= tol and abs(r.pi_min + r.pi_max - 1) <= SYMMETRY_TOL
        ok &= good
        shown = f"{r.pi_min:.3f}" if feasible else "infeasible"
        parts.append(f"{r.env}/{r.column}={shown} vs {r.reference:.3f}{'' if good else '!'}")
    # directional orderings across the misestimate columns
    by = {(r.env, r.column): r.pi_min for r in rows}
    for env in ("scb", "ascb"):
        effect = [by[(env, c)] for c, _ in ref.EFFECT_SCALES]
        noise = [by[(env, c)] for c in ("sigma_est < sigma", "sigma_est = sigma", "sigma_est > sigma")]
        order_ok = effect[0] > effect[1] > effect[2] and noise[0] < noise[1] < noise[2]
        ok &= order_ok
        parts.append(f"{env} ordering {'ok' if order_ok else 'broken'}")
    assert report(4, "solved clip ranges (scb/ascb +-0.03, mobile health +-0.05, orderings)", ok, " ".join(parts))


def test_regret_against_clipped_oracle():
    parts, ok = [], True
    for env in ENVS:
        s = cell(env=env, policy="oracle")
        good = abs(s.reg_c) <= max(s.reg_c_ci, 1e-9)
        ok &= good
        parts.append(f"{env}/oracle reg_c={s.reg_c:.3g}+-{s.reg_c_ci:.2g}{'' if good else '!'}")
    s = cell(env="mobile_health", policy="fixed")
    good = abs(s.reg_c - MH_FIXED_REG_C) <= MH_FIXED_REG_C_TOL
    ok &= good
    parts.append(f"mobile_health/fixed reg_c={s.reg_c:.1f} (target 117+-30){'' if good else '!'}")
    for policy in ("acts", "linucb"):
        s = clipped("mobile_health", policy)
        good = not s.infeasible and s.reg_c <= MH_CLIPPED_REG_C_CEIL
        ok &= good
        parts.append(f"mobile_health/{policy}+clip reg_c={s.reg_c:.1f}{'' if good else '!'}")
    assert report(5, "clipped-oracle regret checks", ok, " ".join(parts))


def test_robustness_directions():
    parts, ok = [], True
    for env in ENVS:
        for policy in CLIPPED:
            under = clipped(env, policy, effect_scale=1 / 1.1)
            exact = clipped(env, policy)
            over = clipped(env, policy, effect_scale=1.1)
            feasible = not (under.infeasible or exact.infeasible or over.infeasible)
            good = feasible and under.reject_rate > exact.reject_rate > over.reject_rate
            ok &= good
            parts.append(f"{env}/{policy} {_rate(under)}>{_rate(exact)}>{_rate(over)}{'' if good else '!'}")
    for env in ENVS:
        for policy in ("fixed",) + CLIPPED:
            base = cell(env=env, policy=policy) if policy == "fixed" else clipped(env, policy)
            const = (cell(env=env, policy=policy, marginal_model="constant") if policy == "fixed"
                     else clipped(env, policy, marginal_model="constant"))
            good = abs(const.reject_rate - base.reject_rate) < MARGINAL_POWER_TOL
            ok &= good
            parts.append(f"{env}/{policy} B=1 {_rate(base)}->{_rate(const)}{'' if good else '!'}")
    s = clipped("mobile_health", "linucb", effect_model="drop_last")
    good = s.reject_rate < DROP_LINUCB_POWER_CEIL
    ok &= good
    parts.append(f"mobile_health/linucb drop={_rate(s)}{'' if good else '!'}")
    assert report(6, "robustness directions", ok, " ".join(parts))


def _brute_wls(data):
    X = np.concatenate([data.b, (data.action - data.propensity)[..., None] * data.z], axis=2).reshape(-1, data.q + data.p)
    w = (1 / (data.propensity * (1 - data.propensity))).ravel()
    sw = np.sqrt(w)
    return np.linalg.lstsq(X * sw[:, None], data.reward.ravel() * sw, rcond=None)[0]


def test_oracle_equivalences():
    start = time.perf_counter()
    g = np.random.default_rng(2024)
    parts, ok = [], True

    worst = 0.0
    for _ in range(50):
        N, T, p, q = 3, 5, 3, 2
        prop = g.uniform(0.1, 0.9, (N, T))
        data = TrialDataset(np.arange(N), g.normal(size=(N, T, p)), g.normal(size=(N, T, q)),
                            (g.random((N, T)) < prop).astype(int), prop, g.normal(size=(N, T)))
        worst = max(worst, float(np.max(np.abs(fit_wls(data) - _brute_wls(data)))))
    good = worst <= WLS_TOL
    ok &= good
    parts.append(f"wls max diff {worst:.1e}")

    crit = chi2_inv(0.95, 3)
    draws = g.noncentral_chisquare(3, 10.9, 10_000_000)
    mc = float(np.mean(draws <= crit))
    diff = abs(noncentral_chi2_cdf(crit, 3, 10.9) - mc)
    good = diff <= NCX2_MC_TOL
    ok &= good
    parts.append(f"ncx2 vs MC diff {diff:.1e}")

    # Monte Carlo oracle for c_beta: bisection on simulated power with common draws
    normals = g.standard_normal((1_000_000, 3))
    lo, hi = 5.0, 20.0
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        shifted = normals.copy()
        shifted[:, 0] += math.sqrt(mid)
        power = np.mean(np.sum(shifted**2, axis=1) > crit)
        lo, hi = (mid, hi) if power < 0.8 else (lo, mid)
    c_mc = 0.5 * (lo + hi)
    c_beta = solve_c_beta(0.05, 0.2, 3)
    good = abs(c_beta - C_BETA_TARGET) <= C_BETA_TOL and abs(c_mc - C_BETA_TARGET) <= C_BETA_TOL
    ok &= good
    parts.append(f"c_beta {c_beta:.4f} (MC {c_mc:.3f})")

    data = TrialDataset(np.array([0]), np.full((1, 1, 1), 2.0), np.empty((1, 1, 0)), np.array([[1]]),
                        np.array([[0.25]]), np.array([[3.0]]))
    x, w = 0.75 * 2.0, 1 / (0.25 * 0.75)
    hand = (w * (3.0 - 0.7 * x) * x) ** 2 / (w * x * x) ** 2
    diff = abs(sandwich_cov(data, np.array([0.7]))[0, 0] - hand)
    good = diff <= 1e-12 * hand
    ok &= good
    parts.append(f"sandwich N=T=1 diff {diff:.1e}")

    cr = ClipRange(0.243, 0.757)
    worst = 0.0
    for pi_alg in (0.02, 0.3, 0.5, 0.8, 0.97):
        u, u2 = g.random(1_000_000), g.random(1_000_000)
        pi = np.full(u.size, pi_alg)
        for out in (clip_step(pi, cr, u), drop_coupled_step(pi, cr, u), flip_step(pi, cr, u, u2)):
            worst = max(worst, abs(out.executed_action.mean() - out.recorded_propensity[0]))
    good = worst <= WRAPPER_CAL_TOL
    ok &= good
    parts.append(f"wrapper calibration max {worst:.4f}")

    elapsed = time.perf_counter() - start
    ok &= elapsed < 60
    parts.append(f"{elapsed:.0f}s")
    assert report(7, "oracle equivalences", ok, "; ".join(parts))


def test_byte_identical_outputs():
    config = {"env": "scb", "policy": "acts", "wrapper": "drop", "S": 40, "block_size": 7, "seed": 17}
    with tempfile.TemporaryDirectory() as tmp:
        cfg = os.path.join(tmp, "cfg.json")
        with open(cfg, "w") as fh:
            json.dump(config, fh)
        outs = []
        for threads in ("1", "4"):
            out = os.path.join(tmp, f"out{threads}")
            env = dict(os.environ, POWERBANDIT_THREADS=threads)
            subprocess.run([sys.executable, "-m", "powerbandit.cli", "simulate", "--config", cfg, "--out", out,
                            "--keep-datasets"], check=True, env=env, capture_output=True)
            outs.append(out)
        names = ["summary.csv", "replications.csv"] + [os.path.join("datasets", f) for f in
                                                        sorted(os.listdir(os.path.join(outs[0], "datasets")))]
        same = all(open(os.path.join(outs[0], n), "rb").read() == open(os.path.join(outs[1], n), "rb").read()
                   for n in names)
    assert report(8, "byte-identical CSVs across worker counts", same, f"{len(names)} files compared")


if __name__ == "__main__":
    failed = 0
    for name, fn in list(globals().items()):
        if name.startswith("test_") and callable(fn):
            try:
                fn()
            except AssertionError:
                failed += 1
    sys.exit(1 if failed else 0)
