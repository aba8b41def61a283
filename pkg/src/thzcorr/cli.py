"""Command-line entry point: ``thzcorr <subcommand> [options]``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .budget import BudgetParams, budget_table
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .correlator import InsufficientSignal, read_trace_csv
from .eos import EOSCFormatError
from .mb_laser import IntegratorBlowUp, write_trajectory_csv
from .runner import (run_correlation_experiment, run_threshold_sweep, simulate_from_config,
                     write_json)
from .spectra import correlation_spectrum, dominant_nonzero_peak, write_spectrum_csv

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else parse_config("")
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be >= 0")
        cfg.values["experiment"]["master_seed"] = args.seed
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg.values["experiment"]["threads"] = args.threads
    if args.out is not None:
        cfg.values["output"]["directory"] = args.out
    return cfg


def cmd_simulate(args) -> int:
    cfg = _load(args)
    if cfg.source_kind not in (None, "mb"):
        raise ConfigError("simulate needs [source] kind = mb")
    traj = simulate_from_config(cfg, gain_ratio=args.gain_ratio)
    out = Path(cfg.get("output", "directory"))
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(out / "trajectory.csv", traj)
    (out / "effective_config.ini").write_text(cfg.echo(), encoding="utf-8")
    print(f"wrote {out / 'trajectory.csv'} ({traj.times.size} snapshots, "
          f"total power {traj.total_power():.6g} E_sat^2)")
    return EXIT_OK


def cmd_correlate(args) -> int:
    cfg = _load(args)
    res = run_correlation_experiment(cfg, eosc_files=args.eosc)
    for k, v in res.summary.items():
        print(f"{k:16s} {v}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args)
    rep = run_threshold_sweep(cfg)
    print(f"{'G/G_th':>7s} {'I[mA]':>8s} {'P[Esat^2]':>11s} {'g2_modal':>15s} "
          f"{'g2_pipeline':>15s}  status")
    for r in rep.rows:
        print(f"{r.gain_ratio:7.3f} {r.current_mA:8.1f} {r.total_power:11.4g} "
              f"{r.g2_modal:7.3f}+-{r.g2_modal_err:6.3f} "
              f"{r.g2_pipeline:7.3f}+-{r.g2_pipeline_err:6.3f}  {r.status}")
    return EXIT_OK


def cmd_spectrum(args) -> int:
    cfg = _load(args)
    data = read_trace_csv(args.csv)
    if args.column not in data:
        raise ConfigError(f"column {args.column!r} not in {args.csv}")
    taus = data["tau_fs"] * 1e-15
    spec = correlation_spectrum(taus, data[args.column], window=args.window,
                                demean=args.column.startswith("g2"))
    out = Path(cfg.get("output", "directory"))
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"spectrum_{args.column}.csv"
    write_spectrum_csv(path, spec, [f"source={Path(args.csv).name} column={args.column}"])
    print(f"wrote {path}; dominant peak {dominant_nonzero_peak(spec) / 1e12:.4f} THz")
    return EXIT_OK


def cmd_budget(args) -> int:
    if args.config:
        _load(args)  # validates the file; budget parameters come from flags
    bp = BudgetParams(nu=args.nu_thz * 1e12, delta_t=args.window_fs * 1e-15,
                      mode_area=args.mode_area_m2)
    tab = budget_table(args.field, bp)
    if args.json:
        print(json.dumps(tab, indent=2, sort_keys=True))
    else:
        for k, v in tab.items():
            print(f"{k:30s} {v:.6g}")
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        write_json(Path(args.out) / "budget.json", tab)
    return EXIT_OK


def _add_globals(p: argparse.ArgumentParser, default) -> None:
    p.add_argument("--config", metavar="PATH", default=default, help="experiment config file")
    p.add_argument("--seed", type=int, metavar="N", default=default,
                   help="master seed (overrides config)")
    p.add_argument("--out", metavar="DIR", default=default, help="output directory (overrides config)")
    p.add_argument("--threads", type=int, metavar="N", default=default, help="worker threads")


def build_parser() -> argparse.ArgumentParser:
    # global flags are accepted before or after the subcommand
    glob = argparse.ArgumentParser(add_help=False)
    _add_globals(glob, argparse.SUPPRESS)

    ap = argparse.ArgumentParser(prog="thzcorr",
                                 description="Sub-cycle THz field and intensity correlation toolkit")
    _add_globals(ap, None)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[glob], help="export a Maxwell-Bloch modal trajectory")
    p.add_argument("--gain-ratio", type=float, default=None, help="pump in units of threshold")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("correlate", parents=[glob], help="run a correlation scan")
    p.add_argument("--eosc", nargs="+", metavar="FILE", help="recorded EOSC files instead of a source")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("sweep", parents=[glob], help="threshold sweep of the laser model")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("spectrum", parents=[glob], help="spectrum of a correlation CSV column")
    p.add_argument("csv", help="correlation CSV")
    p.add_argument("--column", default="g1", choices=["g1", "g2_raw", "g2_env"])
    p.add_argument("--window", default="hann", choices=["hann", "none"])
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("budget", parents=[glob], help="photon budget table")
    p.add_argument("--field", type=float, default=90.0, help="detected peak field [V/m]")
    p.add_argument("--nu-thz", type=float, default=2.3)
    p.add_argument("--window-fs", type=float, default=146.0)
    p.add_argument("--mode-area-m2", type=float, default=4.6e-7)
    p.add_argument("--json", action="store_true", help="print JSON instead of text")
    p.set_defaults(func=cmd_budget)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EOSCFormatError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (InsufficientSignal, IntegratorBlowUp, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # remaining parameter validation errors (dataclass checks)
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
