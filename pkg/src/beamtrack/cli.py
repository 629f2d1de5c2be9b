"""Command line: ``beamtrack run|verify|plot-convergence|plot-landscape``.

Exit codes: 0 success, 1 episode failure (or verify mismatch), 2 invalid
config or missing input.
"""

import argparse
import sys

from .config import ConfigError, load_config
from .harness import configure_logging, run_experiments, verify

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INVALID = 2


def _cmd_run(args):
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.seed_offset:
        config = config.with_seed_offset(args.seed_offset)
    run_dir, manifest = run_experiments(config, out_dir=args.out, parallelism=args.parallelism)
    print(f"wrote {run_dir}")
    if manifest["failures"]:
        for f in manifest["failures"]:
            print(f"failed: {f['policy']} {f['speed']} seed {f['seed']}: {f['error']}",
                  file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def _cmd_verify(args):
    try:
        problems = verify(args.run_dir)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    for p in problems:
        print(f"mismatch: {p}")
    if problems:
        return EXIT_FAILED
    print("ok: aggregates match per-slot records")
    return EXIT_OK


def _cmd_plot_convergence(args):
    from .plots import PlotInputError, plot_convergence
    try:
        paths = plot_convergence(args.run_dir, out_dir=args.out, policies=args.policy,
                                 window=args.window)
    except (PlotInputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    for p in paths:
        print(f"wrote {p}")
    return EXIT_OK


def _cmd_plot_landscape(args):
    from .plots import PlotInputError, plot_landscape
    try:
        paths = plot_landscape(args.run_dir, args.slots, policy=args.policy, speed=args.speed,
                               seed=args.seed, out_dir=args.out)
    except (PlotInputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    for p in paths:
        print(f"wrote {p}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="beamtrack",
                                     description="GP beam tracking experiments")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run every (policy, speed, seed) episode of a config")
    run.add_argument("config", help="YAML experiment config")
    run.add_argument("--out", help="run directory (default: output_dir from the config)")
    run.add_argument("--parallelism", type=int, default=None,
                     help="worker processes (default: from the config)")
    run.add_argument("--seed-offset", type=int, default=0, help="added to every seed")
    run.set_defaults(func=_cmd_run)

    ver = sub.add_parser("verify", help="recompute aggregates from per-slot CSVs and compare")
    ver.add_argument("run_dir")
    ver.set_defaults(func=_cmd_verify)

    conv = sub.add_parser("plot-convergence", help="accuracy/overhead/error vs slot")
    conv.add_argument("run_dir")
    conv.add_argument("--policy", action="append", help="restrict to policy (repeatable)")
    conv.add_argument("--window", type=int, default=None, help="rolling window in slots")
    conv.add_argument("--out", help="figure directory (default: <run_dir>/figures)")
    conv.set_defaults(func=_cmd_plot_convergence)

    land = sub.add_parser("plot-landscape", help="EI / posterior / truth heatmaps")
    land.add_argument("run_dir")
    land.add_argument("--slots", type=int, nargs="+", required=True)
    land.add_argument("--policy", help="bayes_opt policy name (default: first)")
    land.add_argument("--speed", help="speed class (default: first)")
    land.add_argument("--seed", type=int, default=None, help="seed (default: first)")
    land.add_argument("--out", help="figure directory (default: <run_dir>/figures)")
    land.set_defaults(func=_cmd_plot_landscape)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    if getattr(args, "parallelism", None) is not None and args.parallelism < 1:
        print("error: --parallelism must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
