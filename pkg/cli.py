"""
cli.py
------
Command-line entry point for the scheduling simulator.

    python cli.py simulate --spec specs/fig6.cfg --seeds 5 --out-dir results
    python cli.py bounds --spec specs/bounds.cfg --format csv
    python cli.py oracle --trace trace.csv --channels 2 --brute-force

Any simulator error exits with status 2 and a one-line diagnostic naming the
offending field when known.
"""

import argparse
import json
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from core import HarvestTrace
from exceptions import ConfigurationError, SimulationError
from experiments import load_spec, run_bounds, run_experiment, summarize
from logging_config import init_logging
from metrics import remark2_throughput
from oracle import brute_force_optimum, offline_optimum
from schemas import NetworkConfig

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_SIM_ERROR = 2


def _with_seed_override(spec, seeds: Optional[int]):
    if seeds is None:
        return spec
    if seeds < 1:
        raise ConfigurationError("--seeds must be >= 1", "seeds")
    base = spec.seeds[0]
    return spec.model_copy(update={"seeds": list(range(base, base + seeds))})


def cmd_simulate(args: argparse.Namespace) -> int:
    spec = _with_seed_override(load_spec(args.spec), args.seeds)
    formats = [args.format] if args.format else None
    result = run_experiment(spec, out_dir=args.out_dir, formats=formats, workers=args.workers)
    for (policy, D), stats in sorted(summarize(result.rows).items()):
        print(f"{policy:16s} D={D:.3f}  eff={stats['mean_efficiency']:.4f}  "
              f"jain={stats['mean_jain']:.4f}  runs={stats['runs']}")
    for kind, path in result.paths.items():
        print(f"  {kind:5s} -> {path}")
    return EXIT_OK


def cmd_bounds(args: argparse.Namespace) -> int:
    spec = load_spec(args.spec)
    formats = [args.format] if args.format else None
    result = run_bounds(spec, out_dir=args.out_dir, formats=formats)
    for row in result.rows:
        bound = "out of domain" if row.urop_bound is None else f"{row.urop_bound:.4f}"
        print(f"{row.profile:14s} D={row.D:.3f} N={row.N:<7d} urop>={bound:14s} "
              f"rr={row.rr_prediction:.4f} {row.capacity}")
    for kind, path in result.paths.items():
        print(f"  {kind:5s} -> {path}")
    return EXIT_OK


def cmd_oracle(args: argparse.Namespace) -> int:
    trace = HarvestTrace.from_csv(args.trace)
    config = NetworkConfig(
        m=trace.m, k=args.channels, horizon_n=trace.horizon_n, battery_cap=args.battery_cap,
    )
    payload = {
        "m": trace.m,
        "k": config.k,
        "horizon_n": trace.horizon_n,
        "offline_optimum": offline_optimum(trace, config),
        "remark2_throughput": remark2_throughput(trace, config),
    }
    if args.brute_force:
        payload["brute_force_optimum"] = brute_force_optimum(trace, config)
    print(json.dumps(payload, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Energy-harvesting sensor scheduling simulator")
    parser.add_argument("--log-dir", default=None, help="Directory for app.log/error.log")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_output_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("--spec", required=True, help="Path to an INI experiment spec")
        p.add_argument("--out-dir", default=None, help="Output directory (default: EHSCHED_OUTPUT_DIR)")
        p.add_argument("--format", choices=["csv", "json"], default=None,
                       help="Write only this format (default: as in the spec, normally both)")

    simulate = sub.add_parser("simulate", help="Run the (policy, seed) sweep of a spec")
    add_output_args(simulate)
    simulate.add_argument("--seeds", type=int, default=None, help="Override the seed count")
    simulate.add_argument("--workers", type=int, default=None, help="Process pool size for cells")
    simulate.set_defaults(func=cmd_simulate)

    bounds = sub.add_parser("bounds", help="Evaluate the analytic bounds table of a spec")
    add_output_args(bounds)
    bounds.set_defaults(func=cmd_bounds)

    oracle = sub.add_parser("oracle", help="Offline optimum of a trace CSV")
    oracle.add_argument("--trace", required=True, help="Trace CSV (node_id,[b0,]1..N)")
    oracle.add_argument("--channels", type=int, required=True, help="Number of channels k")
    oracle.add_argument("--battery-cap", type=float, default=None)
    oracle.add_argument("--brute-force", action="store_true", help="Also run the exhaustive verifier")
    oracle.set_defaults(func=cmd_oracle)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    init_logging(args.log_dir)
    try:
        return args.func(args)
    except SimulationError as exc:
        field = exc.details.get("field")
        where = f" [{field}]" if field else ""
        logger.error(f"{type(exc).__name__}{where}: {exc.message}")
        print(f"error{where}: {exc.message}", file=sys.stderr)
        return EXIT_SIM_ERROR
    except ValidationError as exc:
        err = exc.errors()[0]
        field = ".".join(str(p) for p in err.get("loc", ()))
        print(f"error [{field}]: {err.get('msg')}", file=sys.stderr)
        return EXIT_SIM_ERROR


if __name__ == "__main__":
    sys.exit(main())
