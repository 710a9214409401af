"""Command-line interface.

Subcommands: ``simulate`` (experiment runner), ``privatize`` (one dataset
through a pipeline), ``fit`` (sparse GLM on a complete dataset) and
``report`` (summarize result CSVs).  Exit codes: 0 success, 2 configuration
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .. import glm, io
from ..pipelines import PrivatizationConfig, run_pipeline
from .experiment import ConfigError, ExperimentConfig, run_experiment, summarize_directory

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vflcopula")
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a simulation experiment from a JSON config")
    sim.add_argument("--config", required=True)
    sim.add_argument("--out", required=True)
    sim.add_argument("--jobs", type=int, default=1)
    sim.add_argument("--kl", action="store_true", help="also compute the copula KL column")

    pv = sub.add_parser("privatize", help="privatize a CSV dataset")
    pv.add_argument("--data", required=True)
    pv.add_argument("--partition", required=True)
    pv.add_argument("--method", required=True, choices=["vcds", "evcds", "ievcds"])
    pv.add_argument("--eps1", type=float, nargs="+", required=True)
    pv.add_argument("--eps2", type=float, nargs="+", required=True)
    pv.add_argument("--t", dest="t_iterations", type=int, default=1)
    pv.add_argument("--n-synth", type=int, default=None)
    pv.add_argument("--allocation", choices=["per_variable", "split"], default="per_variable")
    pv.add_argument("--seed", type=int, default=0)
    pv.add_argument("--out", required=True)

    ft = sub.add_parser("fit", help="fit a sparse GLM with BIC selection")
    ft.add_argument("--data", required=True)
    ft.add_argument("--partition", required=True)
    ft.add_argument("--link", choices=["gaussian", "logistic"], required=True)
    ft.add_argument("--penalty", choices=["scad", "mcp", "lasso"], default="scad")
    ft.add_argument("--grid-size", type=int, default=50)
    ft.add_argument("--out", default=None)

    rp = sub.add_parser("report", help="summarize result CSVs in a directory")
    rp.add_argument("--in", dest="in_dir", required=True)
    return ap


def _cmd_simulate(args) -> int:
    cfg = ExperimentConfig.from_json(args.config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_csv = out_dir / f"results_{cfg.method}_{cfg.mechanism}_{cfg.link}_n{cfg.n}.csv"
    rows = run_experiment(cfg, out_csv=out_csv, jobs=args.jobs, compute_kl=args.kl)
    n_err = sum(1 for r in rows if r.get("error"))
    print(f"wrote {out_csv} ({len(rows)} rows, {n_err} errors)")
    return EXIT_OK


def _cmd_privatize(args) -> int:
    ds = io.read_dataset(args.data, args.partition)
    k = ds.partition.n_clients
    eps1 = args.eps1 * k if len(args.eps1) == 1 else args.eps1
    eps2 = args.eps2 * k if len(args.eps2) == 1 else args.eps2
    if len(eps1) != k or len(eps2) != k:
        raise ConfigError("eps1/eps2 need one value total or one per client")
    cfg = PrivatizationConfig(
        method=args.method, eps1=eps1, eps2=eps2,
        t_iterations=args.t_iterations if args.method == "ievcds" else 1,
        n_synth=args.n_synth, allocation=args.allocation, seed=args.seed,
    )
    synth, report = run_pipeline(ds, cfg)
    out = Path(args.out)
    io.write_dataset(synth, out, out.with_suffix(".partition.json"))
    led = report.ledger
    budgets = {f"client_{i}": led.vdadp(i) for i in range(k)}
    print(json.dumps({"out": str(out), "vdadp": budgets, "total_dp": led.total_dp,
                      "diagnostics": {k2: v for k2, v in report.diagnostics.items() if k2 != "thetas"}},
                     default=float))
    return EXIT_OK


def _cmd_fit(args) -> int:
    ds = io.read_dataset(args.data, args.partition)
    if ds.mask.any():
        raise ConfigError("fit requires a complete dataset (no missing cells)")
    grid = glm.default_lambda_grid(ds, n_values=args.grid_size)
    best, path = glm.bic_select(ds, args.link, args.penalty, lambda_grid=grid)
    doc = json.loads(best.to_json())
    doc["bic_path"] = [[lam, bic] for lam, bic in path]
    text = json.dumps(doc)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return EXIT_OK


def _cmd_report(args) -> int:
    paths = sorted(Path(args.in_dir).glob("*.csv"))
    if not paths:
        raise ConfigError(f"no result CSVs under {args.in_dir}")
    entries = summarize_directory(paths)
    keys = ["method", "mechanism", "rmse", "gmeans", "fdr", "recall", "auc"]
    header = [k for k in keys if any(k in e for e in entries)]
    widths = {k: max(len(k), *(len(str(e.get(k, ""))) for e in entries)) for k in header}
    print("  ".join(k.ljust(widths[k]) for k in header))
    for e in entries:
        print("  ".join(str(e.get(k, "")).ljust(widths[k]) for k in header))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "privatize":
            return _cmd_privatize(args)
        if args.command == "fit":
            return _cmd_fit(args)
        if args.command == "report":
            return _cmd_report(args)
        return EXIT_CONFIG
    except (ConfigError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, np.linalg.LinAlgError, glm.AdmmError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
