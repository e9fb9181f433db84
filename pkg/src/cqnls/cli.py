"""Command line entry point: ``cqnls <command> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys

from .experiments import ConfigError, ScenarioConfig, run_scenario
from .grid import make_grid, write_field
from .ground_state import ConvergenceError, oracle_peak, petviashvili, shooting_oracle
from .inout import MISMATCH_KINDS, mismatch_norm
from .plot import PlotError, plot

EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _load_json(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError("--config", f"no such file {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    return data


def _scenario(args, scenario: str, overrides: dict) -> int:
    raw = _load_json(args.config)
    if args.command == "evolve":
        raw.setdefault("scenario", scenario)
    else:
        raw["scenario"] = scenario
    raw.update({k: v for k, v in overrides.items() if v is not None})
    cfg = ScenarioConfig.from_dict(raw)
    result = run_scenario(cfg)
    print(json.dumps(result.summary.get("checks", {}), sort_keys=True))
    return result.status


def cmd_ground_state(args) -> int:
    if args.oracle:
        profile = shooting_oracle(args.rmax, args.dr)
        out = open(args.out, "w", newline="") if args.out else sys.stdout
        try:
            writer = csv.writer(out, lineterminator="\n")
            writer.writerow(["r", "Q"])
            for r, q in zip(profile.r_values, profile.samples.real):
                writer.writerow([repr(float(r)), repr(float(q))])
        finally:
            if args.out:
                out.close()
        print(f"Q(0) = {oracle_peak(profile):.10f}", file=sys.stderr)
        return EXIT_OK
    grid = make_grid(args.n, args.half_width)
    try:
        gs = petviashvili(grid, tol=args.tol)
    except ConvergenceError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CHECK
    if args.out:
        write_field(args.out, gs.q)
    print(
        json.dumps(
            {"iterations": gs.iterations, "residual": gs.residual, "mass_q": gs.mass_q, "peak": gs.peak}
        )
    )
    return EXIT_OK


def cmd_evolve(args) -> int:
    return _scenario(
        args,
        "threshold",
        {"n": args.n, "half_width": args.half_width, "dt": args.dt, "T": args.T, "csv": args.out_csv,
         "final_field": args.out_field, "out_dir": args.out_dir},
    )


def cmd_inout(args) -> int:
    raw = _load_json(args.config)
    raw["scenario"] = "inout"
    raw.update({k: v for k, v in {"m": args.m, "r_max": args.rmax, "out_dir": args.out_dir}.items() if v is not None})
    cfg = ScenarioConfig.from_dict(raw)
    result = run_scenario(cfg)
    s = result.summary
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["quantity", "value"])
    writer.writerow(["reconstruction_error", repr(s["reconstruction_error"])])
    writer.writerow(["norm_estimate_m", repr(s["norm_estimate"]["m"])])
    writer.writerow(["norm_estimate_2m", repr(s["norm_estimate"]["2m"])])
    writer.writerow(["incoming_fraction", repr(s["incoming_fraction"])])
    return result.status


def cmd_mismatch(args) -> int:
    grid = make_grid(args.n, args.half_width)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["kind", "N", "R", "estimate", "spread"])
    values = []
    for R in args.R_list:
        est = mismatch_norm(args.kind, R, args.N, grid, trials=args.trials, seed=args.seed)
        values.append(est.value)
        writer.writerow([args.kind, repr(args.N), repr(R), repr(est.value), repr(est.spread)])
    if args.kind in ("cutoff_gradient", "cutoff_band"):
        if any(b * 4.0 > a for a, b in zip(values, values[1:])):
            return EXIT_CHECK
    return EXIT_OK


def cmd_plot(args) -> int:
    try:
        plot(args.csv, args.x, args.y, args.out, loglog=args.loglog, reference_slope=args.reference_slope)
    except (PlotError, FileNotFoundError) as exc:
        print(f"plot: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cqnls", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ground-state", help="Petviashvili ground state or shooting-oracle profile")
    p.add_argument("--n", type=int, default=512)
    p.add_argument("--half-width", type=float, default=20.0)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--out", help="field file (grid) or CSV (oracle); oracle defaults to stdout")
    p.add_argument("--oracle", action="store_true", help="radial shooting oracle instead of the grid solver")
    p.add_argument("--rmax", type=float, default=16.0)
    p.add_argument("--dr", type=float, default=1e-3)
    p.set_defaults(func=cmd_ground_state)

    p = sub.add_parser("evolve", help="integrate from a JSON scenario config")
    p.add_argument("--config", required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--half-width", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--T", type=float)
    p.add_argument("--out-csv")
    p.add_argument("--out-field")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_evolve)

    for name, scenario in (("virial-scan", "virial-scan"), ("evacuation", "evacuation"), ("localization", "localization")):
        p = sub.add_parser(name, help=f"run the {scenario} scenario")
        p.add_argument("--config", required=True)
        p.add_argument("--dt", type=float)
        p.add_argument("--T", type=float)
        p.add_argument("--out-dir")
        if scenario == "virial-scan":
            p.add_argument("--R-list", type=_floats, dest="R_list")
        else:
            p.add_argument("--C-list", type=_floats, dest="C_list")
        p.set_defaults(func=_make_scenario_cmd(scenario))

    p = sub.add_parser("freq-decay", help="frequency-decay scan along an evolution")
    p.add_argument("--config", required=True)
    p.add_argument("--N-list", type=_floats, dest="N_list")
    p.add_argument("--out-dir")
    p.set_defaults(func=_make_scenario_cmd("freq-decay"))

    p = sub.add_parser("inout-test", help="in/out projection checks")
    p.add_argument("--config")
    p.add_argument("--m", type=int, default=800)
    p.add_argument("--rmax", type=float, default=20.0)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_inout)

    p = sub.add_parser("mismatch-scan", help="operator-norm estimates of cutoff/projection composites")
    p.add_argument("--kind", choices=MISMATCH_KINDS, default="cutoff_gradient")
    p.add_argument("--N", type=float, default=4.0)
    p.add_argument("--R-list", type=_floats, dest="R_list", default=[4.0, 8.0, 16.0])
    p.add_argument("--trials", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--half-width", type=float, default=48.0)
    p.set_defaults(func=cmd_mismatch)

    p = sub.add_parser("plot", help="SVG line plot of CSV columns")
    p.add_argument("csv")
    p.add_argument("--x", default="t")
    p.add_argument("--y", action="append", required=True, help="column to plot; repeatable")
    p.add_argument("--out", required=True)
    p.add_argument("--loglog", action="store_true")
    p.add_argument("--reference-slope", type=float)
    p.set_defaults(func=cmd_plot)
    return parser


def _make_scenario_cmd(scenario: str):
    def run(args) -> int:
        overrides = {k: getattr(args, k, None) for k in ("dt", "T", "out_dir", "R_list", "C_list", "N_list")}
        return _scenario(args, scenario, overrides)

    return run


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
