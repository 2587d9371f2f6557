"""Command line entry point: ``fracpme {simulate,profile,verify,fit-rate}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .barenblatt import BarenblattProfile, sample_on_grid
from .frac_ops import riesz_potential
from .grid import Grid1D
from .harness import (
    DEFAULT_WINDOW,
    PREFACTOR_MODES,
    QUANTITIES,
    fit_decay_rate,
    fit_report,
    gnuplot_script,
    load_config,
    read_csv,
    theoretical_rate,
    write_csv,
)
from .solver import ConfigError, SimulationAbort, run

EXIT_OK, EXIT_FAIL, EXIT_INVALID, EXIT_ABORT = 0, 1, 2, 3


def _window(text: str) -> tuple[float, float]:
    try:
        a, b = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("window must be 't0,t1'") from None
    return a, b


def cmd_simulate(args) -> int:
    config = load_config(args.config)
    result = run(config)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(result.records, out)
    report = fit_report(result, args.window, [args.quantity] if args.quantity else QUANTITIES)
    out.with_suffix(".fit.json").write_text(json.dumps(report, indent=2))
    out.with_suffix(".gp").write_text(gnuplot_script(out.name))
    print(json.dumps(report, indent=2))
    return EXIT_OK


def cmd_profile(args) -> int:
    prof = BarenblattProfile.from_mass(args.mass, args.s)
    L = args.L if args.L is not None else 2.0 * prof.R
    grid = Grid1D(L, args.n)
    rho = sample_on_grid(prof, grid)
    pot = riesz_potential(rho, args.s).values
    x = grid.centers
    resid = pot + 0.5 * x**2 - prof.el_constant
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "rho", "potential", "el_residual"])
        for row in zip(x, rho.values, pot, resid):
            w.writerow([repr(float(v)) for v in row])
    inside = np.abs(x) <= 0.9 * prof.R
    print(json.dumps({"M": prof.M, "R": prof.R, "k": prof.k, "el_constant": prof.el_constant,
                      "max_interior_residual": float(np.max(np.abs(resid[inside])))}))
    return EXIT_OK


def cmd_verify(args) -> int:
    from .acceptance import verify

    report = verify(args.config)
    for c in report["criteria"]:
        print(f"[{'PASS' if c['pass'] else 'FAIL'}] {c['id']:2d} {c['name']}")
    for w in report["warnings"]:
        print(f"warning: {w}", file=sys.stderr)
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2))
    return EXIT_OK if report["pass"] else EXIT_FAIL


def cmd_fit_rate(args) -> int:
    records = read_csv(args.csv)
    rate = theoretical_rate(load_config(args.config)) if args.config else None
    mode = args.prefactor_mode
    fit = fit_decay_rate(records, args.quantity, mode, args.window, rate)
    report = fit.report()
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2))
    print(json.dumps(report, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fracpme", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one config and write the diagnostics CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="CSV path; fit report and plot script go next to it")
    p.add_argument("--window", type=_window, default=DEFAULT_WINDOW)
    p.add_argument("--quantity", choices=QUANTITIES)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("profile", help="dump a sampled steady profile")
    p.add_argument("--s", type=float, required=True)
    p.add_argument("--mass", type=float, default=1.0)
    p.add_argument("--n", type=int, default=1024)
    p.add_argument("--L", type=float, help="half-width (default 2R)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("verify", help="run an acceptance suite")
    p.add_argument("--config", help="suite JSON (default: the shipped suite)")
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("fit-rate", help="fit a decay rate to a diagnostics CSV")
    p.add_argument("csv")
    p.add_argument("--config", help="run config, for the theoretical rate")
    p.add_argument("--quantity", choices=QUANTITIES, default="H_rel")
    p.add_argument("--window", type=_window, default=DEFAULT_WINDOW)
    p.add_argument("--prefactor-mode", choices=PREFACTOR_MODES, default="none")
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit_rate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SimulationAbort as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
