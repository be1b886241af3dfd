"""conftree command line: run, certify, slope, dump-mesh, validate-quadrature.

Exit codes: 0 success, 1 certification or check failure (also bad input),
2 resource cap (enumeration or iteration cap).
"""

from __future__ import annotations

import argparse
import logging
import math
import sys

from . import bench
from .bench import EXIT_CAP, EXIT_FAIL, EXIT_OK, ConfigError


def _config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("-c", "--config", help="key = value config file")
    p.add_argument("--target")
    p.add_argument("--alg", dest="algorithm", choices=("alg1", "alg2", "both"))
    p.add_argument("--iters", type=int, help="shorthand for stop = max_iterations")
    p.add_argument("--max-leaves", type=int, help="shorthand for stop = max_leaves")
    p.add_argument("--quadrature", choices=("adaptive", "plain"))
    p.add_argument("--tol", type=float)
    p.add_argument("--stride", type=int)
    p.add_argument("--outdir")
    p.add_argument("--depth", dest="oracle_depth", type=int)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key")


def _load(args) -> bench.ExperimentConfig:
    over = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        over[k.strip()] = v.strip()
    for key in ("target", "algorithm", "quadrature", "tol", "stride", "outdir", "oracle_depth"):
        val = getattr(args, key, None)
        if val is not None:
            over[key] = val
    if getattr(args, "iters", None) is not None:
        over.update(stop="max_iterations", stop_value=args.iters)
    if getattr(args, "max_leaves", None) is not None:
        over.update(stop="max_leaves", stop_value=args.max_leaves)
    return bench.load_config(args.config, over)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="conftree", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the greedy algorithms and write CSVs and meshes")
    _config_args(p)

    p = sub.add_parser("certify", help="check the near-best bound against brute force")
    _config_args(p)
    p.add_argument("--trace", help="certify an existing trace CSV instead of running")

    p = sub.add_parser("slope", help="log-log slope of a convergence CSV")
    p.add_argument("csv")
    p.add_argument("--min-cards", type=float, default=0.0)
    p.add_argument("--max-cards", type=float, default=math.inf)

    p = sub.add_parser("dump-mesh", help="write the mesh and patch history after n steps")
    _config_args(p)
    p.add_argument("--iteration", type=int, required=True)

    sub.add_parser("validate-quadrature", help="check the degree-17 triangle rule")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            _, code = bench.cmd_run(_load(args))
            return code
        if args.command == "certify":
            _, code = bench.cmd_certify(_load(args), trace_csv=args.trace)
            return code
        if args.command == "slope":
            s = bench.cmd_slope(args.csv, args.min_cards, args.max_cards)
            print(f"{s:.6f}")
            return EXIT_OK
        if args.command == "dump-mesh":
            cfg = _load(args)
            if cfg.algorithm == "both":
                cfg = cfg.replace(algorithm="alg1")
            mesh, patches = bench.cmd_dump_mesh(cfg, args.iteration)
            print(mesh)
            print(patches)
            return EXIT_OK
        if args.command == "validate-quadrature":
            return bench.cmd_validate_quadrature()
    except (ConfigError, ValueError, OSError) as exc:
        print(f"conftree {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except bench.SearchCapExceeded as exc:
        print(f"conftree {args.command}: {exc}", file=sys.stderr)
        return EXIT_CAP
    return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
