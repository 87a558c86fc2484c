"""Command line entry point: ``sda-bench {run,bayes,bound,balance,diversity}``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis
from .arms import Family
from .bench import (PRESETS, ConfigError, EmitError, emit, load_config, lower_bound_curve,
                    mix_seed, preset, run_bayesian_experiment, run_experiment,
                    summary_document)


def _config(args):
    src = args.config
    cfg = preset(src) if src in PRESETS and not Path(src).exists() else load_config(src)
    overrides = {}
    if args.runs is not None:
        overrides["runs"] = args.runs
    if args.seed is not None:
        overrides["base_seed"] = args.seed
    return cfg.replace(**overrides) if overrides else cfg


def _write_rows(header, rows, out):
    if out:
        path = Path(out)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            fh = path.open("w", newline="")
        except OSError as exc:
            raise EmitError(f"--out: cannot write {path}: {exc.strerror}") from None
    else:
        fh = sys.stdout
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    if out:
        fh.close()


def _print_table(summary):
    for label, s in summary.algorithms.items():
        q = ", ".join(f"q{p}={v:.1f}" for p, v in zip((20, 50, 80, 95, 99), s.quantiles[:, -1]))
        print(f"{label:>12s}  T={int(s.checkpoints[-1])}  mean={s.final_mean:9.2f}  "
              f"std={s.std[-1]:8.2f}  {q}", file=sys.stderr)


def cmd_campaign(args, bayes: bool) -> int:
    cfg = _config(args)
    result = (run_bayesian_experiment if bayes else run_experiment)(cfg, threads=args.threads)
    _print_table(result.summary)
    out = args.out or cfg.output_path
    if out:
        emit(result, out, args.format)
    elif args.format == "json":
        json.dump(summary_document(result), sys.stdout, indent=2, sort_keys=True)
        print()
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["algorithm", "run", "t", "regret"])
        for label, trs in result.traces.items():
            for tr in trs:
                for t, reg in zip(tr.checkpoints, tr.regrets):
                    w.writerow([label, tr.run_index, int(t), repr(float(reg))])
        sys.stdout.write(buf.getvalue())
    return 0


def cmd_bound(args) -> int:
    cfg = _config(args)
    if cfg.prior is not None:
        raise ConfigError("means", "the lower bound needs a fixed instance")
    grid = args.grid or list(cfg.checkpoints)
    _write_rows(["t", "bound"], lower_bound_curve(cfg.instance(), grid), args.out)
    return 0


def cmd_balance(args) -> int:
    family = Family.parse(args.family)
    exact = family in analysis.SUM_FAMILIES and not args.montecarlo
    rng = np.random.default_rng(mix_seed(args.seed or 0, 0xBA1, 0))
    rows = []
    for j in range(1, args.jmax + 1):
        for M in range(args.Mmax + 1):
            q = analysis.BalanceQuery(family, args.mu1, args.muk, M, j, args.sigma,
                                      "exact" if exact else "montecarlo", args.samples)
            est = analysis.balance_function(q, rng)
            rows.append([M, j, repr(est.value), repr(est.stderr)])
    _write_rows(["M", "j", "alpha", "stderr"], rows, args.out)
    return 0


def cmd_diversity(args) -> int:
    rng = np.random.default_rng(mix_seed(args.seed or 0, 0xD17, 0))
    rows = []
    for j in range(1, args.jmax + 1):
        if j == 1 and max(args.m, args.H) <= analysis.MAX_EXACT_DIVERSITY:
            probs = np.concatenate([[0.0], analysis.diversity_pmf_exact(args.m, args.H)])
            kind = "exact"
        else:
            probs = analysis.diversity_distribution(args.m, args.H, j, args.samples, rng)
            kind = "montecarlo"
        for k, p in enumerate(probs):
            if k >= 1 and (p > 0 or kind == "exact"):
                rows.append([j, k, repr(float(p)), kind])
    _write_rows(["j", "k", "probability", "method"], rows, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sda-bench", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--runs", type=int, help="override the number of runs / instances")
    common.add_argument("--seed", type=int, help="override the base seed")
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: one per core)")
    common.add_argument("--out", help="output file (default: stdout or config output_path)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    sub = ap.add_subparsers(dest="command", required=True)

    for name, helptext in (("run", "fixed-instance campaign"),
                           ("bayes", "random-instance campaign")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("config", help="YAML config file or preset name")
    p = sub.add_parser("bound", parents=[common], help="lower-bound curve C ln t as CSV")
    p.add_argument("config")
    p.add_argument("--grid", type=int, nargs="+", help="t values (default: checkpoints)")

    p = sub.add_parser("balance", parents=[common], help="balance function table as CSV")
    p.add_argument("family")
    p.add_argument("mu1", type=float)
    p.add_argument("muk", type=float)
    p.add_argument("Mmax", type=int)
    p.add_argument("jmax", type=int)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--samples", type=int, default=100_000, help="Monte Carlo samples")
    p.add_argument("--montecarlo", action="store_true", help="force Monte Carlo")

    p = sub.add_parser("diversity", parents=[common], help="law of X_{m,H,j} as CSV")
    p.add_argument("m", type=int)
    p.add_argument("H", type=int)
    p.add_argument("jmax", type=int)
    p.add_argument("--samples", type=int, default=100_000, help="Monte Carlo samples (j > 1)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command in ("run", "bayes"):
            return cmd_campaign(args, args.command == "bayes")
        if args.command == "bound":
            return cmd_bound(args)
        if args.command == "balance":
            return cmd_balance(args)
        return cmd_diversity(args)
    except (ConfigError, EmitError, ValueError) as exc:
        print(f"sda-bench: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
