"""Command line interface: solve-pi, simulate, reproduce, analyze."""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys

from . import harness
from .analysis import analyze, read_dataset_csv, write_dataset_csv
from .power import Infeasible, solve
from .suites import SUITES


def _solve_pi(args) -> int:
    cfg = harness.StudyConfig(env=args.env, N=args.n, T=args.t, alpha0=args.alpha, beta0=args.beta,
                              effect_scale=args.delta_scale)
    spec = cfg.power_spec()
    spec.sigma2 *= args.sigma_scale
    try:
        solved = solve(spec)
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 2
    cr = solved.clip_range
    print(f"pi_min {cr.pi_min:.6f}")
    print(f"pi_max {cr.pi_max:.6f}")
    print(f"Delta  {cr.discriminant:.6f}")
    print(f"c_beta {solved.c_beta:.6f}")
    return 0


def _simulate(args) -> int:
    cfg = harness.StudyConfig.from_json(args.config)
    summary, results = harness.run_study_with_results(cfg, os.path.basename(args.config))
    if summary.infeasible and not results:
        print(f"infeasible: {summary.infeasible}", file=sys.stderr)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "summary.csv"), "w", newline="") as fh:
            fh.write(harness.summaries_csv([summary]))
        with open(os.path.join(args.out, "replications.csv"), "w", newline="") as fh:
            fh.write(harness.replications_csv(results))
        if args.keep_datasets:
            clip_range, _, _ = harness.resolve_clip(cfg)
            ddir = os.path.join(args.out, "datasets")
            os.makedirs(ddir, exist_ok=True)
            for start in range(0, cfg.S, cfg.block_size):
                reps = range(start, min(start + cfg.block_size, cfg.S))
                _, datasets = harness.simulate_block(cfg, reps, clip_range, keep_datasets=True)
                for s, data in zip(reps, datasets):
                    write_dataset_csv(data, os.path.join(ddir, f"replication_{s:05d}.csv"))
    _print_summary(summary)
    return 0


def _print_summary(s) -> None:
    def fmt(v, ci):
        return "n/a" if math.isnan(v) else f"{v:.4f} +- {ci:.4f}"

    print(f"replications {s.S} (analysed {s.analyzed}, failures {s.failures})")
    print(f"clip range   [{s.pi_min:.4f}, {s.pi_max:.4f}]  c_beta {s.c_beta:.4f}")
    print(f"reject rate  {fmt(s.reject_rate, s.reject_ci)}")
    print(f"avg return   {fmt(s.avg_return, s.avg_return_ci)}")
    print(f"reg          {fmt(s.reg, s.reg_ci)}")
    print(f"reg_c        {fmt(s.reg_c, s.reg_c_ci)}")
    print(f"runtime      {s.runtime_s:.1f} s")


def _reproduce(args) -> int:
    def progress(cell, summary):
        print(f"{cell.env:14s} {cell.row:24s} {cell.column:18s} reject {summary.reject_rate:.3f} "
              f"({summary.runtime_s:.1f} s)", file=sys.stderr)

    suites = SUITES if args.suite == "all" else (args.suite,)
    for suite in suites:
        harness.reproduce(suite, args.out, S=args.replications, seed=args.seed, progress=progress)
        print(os.path.join(args.out, f"{suite}.md"))
    return 0


def _analyze(args) -> int:
    data = read_dataset_csv(args.dataset)
    report = analyze(data, args.alpha, args.small_sample_correction)
    json.dump(report.to_dict(), sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="powerbandit", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve-pi", help="solve the power-preserving clip range")
    p.add_argument("--env", required=True, choices=("mobile_health", "scb", "ascb"))
    p.add_argument("--delta-scale", type=float, default=1.0, help="multiply the designer's effect estimate")
    p.add_argument("--sigma-scale", type=float, default=1.0, help="multiply the designer's noise variance")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--beta", type=float, default=0.2)
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--t", type=int, default=90)
    p.set_defaults(func=_solve_pi)

    p = sub.add_parser("simulate", help="run one study cell from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--keep-datasets", action="store_true")
    p.set_defaults(func=_simulate)

    p = sub.add_parser("reproduce", help="run a full reproduction suite")
    p.add_argument("--suite", required=True, choices=SUITES + ("all",))
    p.add_argument("--out", required=True)
    p.add_argument("--replications", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_reproduce)

    p = sub.add_parser("analyze", help="test for a treatment effect in a dataset CSV")
    p.add_argument("--dataset", required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--small-sample-correction", action="store_true")
    p.set_defaults(func=_analyze)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
