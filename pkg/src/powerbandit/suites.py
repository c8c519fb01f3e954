"""Reproduction suites: every cell of each published results table, plus CSV / markdown / SVG reports."""
from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass, field

from . import reference as ref
from .harness import MonteCarloSummary, StudyConfig, run_study
from .power import Infeasible, solve

SUITES = ("type1", "power_regret", "robustness_effect", "robustness_noise", "robustness_marginal",
          "robustness_effect_model", "wrappers")

METRIC_CI = {"reject_rate": "reject_ci", "avg_return": "avg_return_ci", "reg": "reg_ci", "reg_c": "reg_c_ci"}

SOLVED_PI_TOL = {"scb": 0.03, "ascb": 0.03, "mobile_health": 0.05}


@dataclass
class Cell:
    table: str
    env: str
    row: str
    column: str
    config: StudyConfig
    targets: dict = field(default_factory=dict)  # metric -> (value, half_width) or None


@dataclass
class CellResult:
    cell: Cell
    summary: MonteCarloSummary

    def rows(self):
        """One report row per target metric: (metric, value, ci, reference, reference_ci, verdict)."""
        out = []
        for metric, target in self.cell.targets.items():
            value = getattr(self.summary, metric)
            ci = getattr(self.summary, METRIC_CI[metric])
            out.append((metric, value, ci) + _verdict(value, ci, target))
        return out


def _verdict(value, ci, target):
    if target is None:
        return math.nan, math.nan, "n/a"
    r, r_ci = target
    if math.isnan(value):
        return r, r_ci, "fail"
    # 3 standard errors of the difference; both half-widths are 2 SE
    band = 1.5 * math.hypot(0.0 if math.isnan(ci) else ci, r_ci)
    return r, r_ci, "pass" if abs(value - r) <= band else "fail"


def _base(env: str, S: int, seed: int, **kw) -> StudyConfig:
    return StudyConfig(env=env, S=S, seed=seed, **kw)


def _policy_kw(policy: str, wrapper: str | None = None) -> dict:
    if policy == "fixed":
        return {"policy": "fixed", "hyper": 0.5, "wrapper": "none"}
    return {"policy": policy, "wrapper": wrapper or "clip"}


def cells(suite: str, S: int = 1000, seed: int = 0) -> list[Cell]:
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; expected one of {SUITES}")
    out = []
    if suite == "type1":
        for env in ref.ENVS:
            for i, (label, policy, wrapper) in enumerate(ref.MAIN_COLUMNS):
                cfg = _base(env, S, seed, null_effect=True, **_policy_kw(policy, wrapper))
                out.append(Cell(suite, env, "type 1 error", label, cfg, {"reject_rate": ref.TYPE1[env][i]}))
    elif suite == "power_regret":
        for env in ref.ENVS:
            for i, (label, policy, wrapper) in enumerate(ref.MAIN_COLUMNS):
                cfg = _base(env, S, seed, **_policy_kw(policy, wrapper))
                targets = {m: ref.POWER[env][m][i] for m in ("reject_rate", "avg_return", "reg", "reg_c")}
                out.append(Cell(suite, env, "power / return / regret", label, cfg, targets))
    elif suite == "robustness_effect":
        for env in ref.ENVS:
            for row, policy in ref.ROBUST_POLICIES:
                for j, (label, scale) in enumerate(ref.EFFECT_SCALES):
                    cfg = _base(env, S, seed, effect_scale=scale, **_policy_kw(policy))
                    target = (ref.ROBUST_EFFECT[env][policy][j], _binomial_ci(ref.ROBUST_EFFECT[env][policy][j], S))
                    out.append(Cell(suite, env, row, label, cfg, {"reject_rate": target}))
    elif suite == "robustness_noise":
        for env in ref.ENVS:
            for row, policy in ref.ROBUST_POLICIES:
                for j, (label, noise) in enumerate(ref.NOISE_COLUMNS[env]):
                    cfg = _base(env, S, seed, noise=noise, **_policy_kw(policy))
                    v = ref.ROBUST_NOISE[env][policy][j]
                    out.append(Cell(suite, env, row, label, cfg, {"reject_rate": (v, _binomial_ci(v, S))}))
    elif suite == "robustness_marginal":
        for env in ref.ENVS:
            for row, policy in ref.MARGINAL_POLICIES:
                for j, (label, model) in enumerate(ref.MARGINAL_COLUMNS):
                    cfg = _base(env, S, seed, marginal_model=model, **_policy_kw(policy))
                    v = ref.ROBUST_MARGINAL[env][policy][j]
                    out.append(Cell(suite, env, row, label, cfg, {"reject_rate": (v, _binomial_ci(v, S))}))
    elif suite == "robustness_effect_model":
        for env in ref.ENVS:
            for row, policy in ref.MARGINAL_POLICIES:
                for j, (label, model) in enumerate(ref.EFFECT_MODEL_COLUMNS[env]):
                    cfg = _base(env, S, seed, effect_model=model, **_policy_kw(policy))
                    v = ref.ROBUST_EFFECT_MODEL[env][policy][j]
                    out.append(Cell(suite, env, row, label, cfg, {"reject_rate": (v, _binomial_ci(v, S))}))
    else:  # wrappers
        for env in ref.ENVS:
            for row, policy in ref.ROBUST_POLICIES:
                for j, wrapper in enumerate(ref.WRAPPER_COLUMNS):
                    cfg = _base(env, S, seed, policy=policy, wrapper=wrapper)
                    p = ref.WRAPPER_POWER[env][policy][j]
                    ar = ref.WRAPPER_AVG_RETURN[env][policy][j]
                    rg = ref.WRAPPER_REGRET[env][policy][j]
                    half = 0.068 if env != "mobile_health" else 4.0
                    targets = {
                        "reject_rate": None if p is None else (p, _binomial_ci(p, S)),
                        "avg_return": (ar, half),
                        ("reg" if wrapper == "none" else "reg_c"): (rg, half),
                    }
                    out.append(Cell(suite, env, row, wrapper, cfg, targets))
    return out


def _binomial_ci(r: float, S: int) -> float:
    return 2.0 * math.sqrt(r * (1.0 - r) / S)


# ---------------------------------------------------------------------------
# solved clip ranges under designer misestimates
# ---------------------------------------------------------------------------

@dataclass
class SolvedPiRow:
    env: str
    column: str
    pi_min: float
    pi_max: float
    reference: float
    tolerance: float
    infeasible: str = ""

    @property
    def verdict(self) -> str:
        if self.infeasible or math.isnan(self.reference):
            return "fail" if not math.isnan(self.reference) else "n/a"
        return "pass" if abs(self.pi_min - self.reference) <= self.tolerance else "fail"


def solved_pi_rows(kind: str) -> list[SolvedPiRow]:
    """Solved pi ranges for the effect-size ("effect") or noise ("noise") misestimates."""
    rows = []
    if kind == "effect":
        for env in ref.ENVS:
            for (label, scale), r in zip(ref.EFFECT_SCALES, ref.SOLVED_PI_MIN_EFFECT[env]):
                rows.append(_solved_row(StudyConfig(env=env, effect_scale=scale), env, label, r))
    else:
        for env in ("ascb", "scb"):
            for (label, noise), r in zip((("sigma_est < sigma", "under"), ("sigma_est = sigma", "exact"),
                                          ("sigma_est > sigma", "over")), ref.SOLVED_PI_MIN_NOISE[env]):
                rows.append(_solved_row(StudyConfig(env=env, noise=noise), env, label, r))
        rows.append(_solved_row(StudyConfig(env="mobile_health", noise="weekend"), "mobile_health",
                                "sigma_est != sigma", ref.SOLVED_PI_MIN_WEEKEND["mobile_health"]))
    return rows


def _solved_row(cfg: StudyConfig, env: str, label: str, r: float) -> SolvedPiRow:
    try:
        cr = solve(cfg.power_spec()).clip_range
        return SolvedPiRow(env, label, cr.pi_min, cr.pi_max, r, SOLVED_PI_TOL[env])
    except Infeasible as exc:
        return SolvedPiRow(env, label, math.nan, math.nan, r, SOLVED_PI_TOL[env], str(exc))


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def _f(x) -> str:
    return "" if isinstance(x, float) and math.isnan(x) else ("%.17g" % x if isinstance(x, float) else str(x))


CELL_HEADER = ("table", "env", "row", "column", "metric", "value", "ci", "reference", "reference_ci", "verdict",
               "pi_min", "pi_max", "S", "analyzed", "failures", "infeasible")


def results_csv(results: list[CellResult]) -> str:
    import csv

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CELL_HEADER)
    for res in results:
        c, s = res.cell, res.summary
        for metric, value, ci, r, r_ci, verdict in res.rows():
            w.writerow([c.table, c.env, c.row, c.column, metric, _f(value), _f(ci), _f(r), _f(r_ci), verdict,
                        _f(s.pi_min), _f(s.pi_max), s.S, s.analyzed, s.failures, s.infeasible])
    return buf.getvalue()


def solved_pi_csv(rows: list[SolvedPiRow]) -> str:
    lines = ["env,column,pi_min,pi_max,reference_pi_min,tolerance,verdict,infeasible"]
    for r in rows:
        lines.append(",".join([r.env, r.column, _f(r.pi_min), _f(r.pi_max), _f(r.reference), _f(r.tolerance),
                               r.verdict, '"' + r.infeasible.replace('"', "'") + '"' if r.infeasible else ""]))
    return "\n".join(lines) + "\n"


def markdown_summary(suite: str, results: list[CellResult], solved: list[SolvedPiRow] | None = None) -> str:
    lines = [f"# {suite}", "", "| env | row | column | metric | simulated | reference | verdict |",
             "|---|---|---|---|---|---|---|"]
    n_pass = n_total = 0
    for res in results:
        c = res.cell
        for metric, value, ci, r, r_ci, verdict in res.rows():
            sim = "infeasible" if res.summary.infeasible and math.isnan(value) else f"{value:.4g} ± {ci:.2g}"
            refs = "" if math.isnan(r) else f"{r:.4g} ± {r_ci:.2g}"
            lines.append(f"| {c.env} | {c.row} | {c.column} | {metric} | {sim} | {refs} | {verdict} |")
            if verdict != "n/a":
                n_total += 1
                n_pass += verdict == "pass"
    if solved:
        lines += ["", "## solved clip ranges", "", "| env | column | pi_min | pi_max | reference pi_min | verdict |",
                  "|---|---|---|---|---|---|"]
        for r in solved:
            lines.append(f"| {r.env} | {r.column} | {r.pi_min:.4f} | {r.pi_max:.4f} | {r.reference:.3f} | {r.verdict} |")
            if r.verdict != "n/a":
                n_total += 1
                n_pass += r.verdict == "pass"
    lines += ["", f"{n_pass} of {n_total} comparisons within tolerance.", ""]
    return "\n".join(lines)


def bar_chart_svg(suite: str, results: list[CellResult], metric: str = "reject_rate") -> str:
    """Grouped bars (one group per env/row, one bar per column) with 2-SE error bars."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    groups: dict = {}
    columns: list = []
    for res in results:
        c = res.cell
        groups.setdefault(f"{c.env}\n{c.row}", {})[c.column] = res.summary
        if c.column not in columns:
            columns.append(c.column)
    names = list(groups)
    width = 0.8 / max(1, len(columns))
    with plt.rc_context({"svg.hashsalt": "powerbandit", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(max(6.0, 1.4 * len(names)), 4.0))
        for j, col in enumerate(columns):
            xs, ys, es = [], [], []
            for i, g in enumerate(names):
                s = groups[g].get(col)
                if s is None:
                    continue
                v = getattr(s, metric)
                xs.append(i + (j - (len(columns) - 1) / 2) * width)
                ys.append(0.0 if math.isnan(v) else v)
                e = getattr(s, METRIC_CI[metric])
                es.append(0.0 if math.isnan(e) else e)
            ax.bar(xs, ys, width, yerr=es, label=col, capsize=2)
        ax.set_xticks(range(len(names)))
        ax.set_xticklabels(names, fontsize=7)
        ax.set_ylabel(metric.replace("_", " "))
        ax.set_title(suite)
        ax.legend(fontsize=7, ncol=min(len(columns), 4))
        fig.tight_layout()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    return buf.getvalue()


def run_cells(cell_list: list[Cell], workers: int | None = None, progress=None) -> list[CellResult]:
    out = []
    for cell in cell_list:
        summary = run_study(cell.config, f"{cell.env}/{cell.row}/{cell.column}", workers)
        out.append(CellResult(cell, summary))
        if progress:
            progress(cell, summary)
    return out


def reproduce(suite: str, out_dir, S: int = 1000, seed: int = 0, workers: int | None = None, progress=None):
    """Run every cell of a suite and write ``<suite>.csv``, ``<suite>.md`` and ``<suite>.svg``."""
    os.makedirs(out_dir, exist_ok=True)
    results = run_cells(cells(suite, S, seed), workers, progress)
    solved = None
    if suite == "robustness_effect":
        solved = solved_pi_rows("effect")
    elif suite == "robustness_noise":
        solved = solved_pi_rows("noise")
    with open(os.path.join(out_dir, f"{suite}.csv"), "w", newline="") as fh:
        fh.write(results_csv(results))
    if solved is not None:
        with open(os.path.join(out_dir, f"{suite}_solved_pi.csv"), "w", newline="") as fh:
            fh.write(solved_pi_csv(solved))
    with open(os.path.join(out_dir, f"{suite}.md"), "w") as fh:
        fh.write(markdown_summary(suite, results, solved))
    with open(os.path.join(out_dir, f"{suite}.svg"), "w") as fh:
        fh.write(bar_chart_svg(suite, results))
    return results
