"""Command-line entry point: ``zonalhvac {simulate,optimize,sweep,mesh-info}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import scenario
from .flow import FlowSolverError
from .mesh import MeshError
from .sparse_linalg import SingularMatrixError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_SWEEP = 4

MIN_SWEEP_SUCCESSES = 15


def _zone(text: str):
    if text == "whole":
        return "whole"
    try:
        z = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"zone must be an integer index or 'whole', got {text!r}") from None
    if z < 0:
        raise argparse.ArgumentTypeError("zone index must be non-negative")
    return z


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="zonalhvac", description="Zoned heating and ventilation control.")
    p.add_argument("-v", "--verbose", action="store_true", help="log solver progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, zone=True):
        sp.add_argument("--config", help="scenario JSON (defaults to the canonical apartment)")
        sp.add_argument("--out", help="output directory (overrides output_dir in the config)")
        sp.add_argument("--theta", type=float, help="time-stepping parameter in [0, 1]")
        if zone:
            sp.add_argument("--zone", type=_zone, help="target zone: 0..17 or 'whole'")

    common(sub.add_parser("simulate", help="forward run with the controls from the config"))
    common(sub.add_parser("optimize", help="optimal control for one zone"))
    sw = sub.add_parser("sweep", help="optimize every zone and the whole apartment")
    common(sw, zone=False)
    sw.add_argument("--seq", action="store_true", help="run zones sequentially (deterministic order)")
    sw.add_argument("--workers", type=int, default=None, help="parallel worker processes")
    mi = sub.add_parser("mesh-info", help="print mesh and dof counts as JSON")
    mi.add_argument("--config")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = scenario.load(args.config) if args.config else scenario.validate({})
        if args.command != "mesh-info":
            cfg = cfg.with_overrides(theta=args.theta, zone=getattr(args, "zone", None))
    except scenario.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "mesh-info":
            print(json.dumps(scenario.mesh_info(cfg), indent=2, sort_keys=True))
            return EXIT_OK
        out = args.out or cfg["output_dir"]
        if args.command == "simulate":
            res = scenario.run_simulate(cfg, out)
            print(json.dumps(res["energy"], indent=2, sort_keys=True))
        elif args.command == "optimize":
            res = scenario.run_optimize(cfg, out)
            print(json.dumps({k: res[k] for k in ("zone", "converged", "iterations", "energy")},
                             indent=2, sort_keys=True))
        else:
            workers = 1 if args.seq else (args.workers or 4)
            summary = scenario.run_sweep(cfg, out, workers=workers)
            print(json.dumps({k: summary[k] for k in ("n_succeeded", "zoned", "whole")}, indent=2, sort_keys=True))
            if summary["n_succeeded"] < MIN_SWEEP_SUCCESSES:
                print(f"sweep: only {summary['n_succeeded']} zones succeeded", file=sys.stderr)
                return EXIT_SWEEP
    except MeshError as exc:
        print(f"config error: mesh: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FlowSolverError, SingularMatrixError, FloatingPointError, ArithmeticError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
