"""Command line entry point.

    fbm-mdp list
    fbm-mdp validate --config cfg.json
    fbm-mdp run --config cfg.json
    fbm-mdp run --experiment exp-fbm-cov --set n_paths=2000 --set H=0.6

Exit codes: 0 ok, 2 invalid configuration, 3 numerical failure.
The worker count for Monte Carlo fan-out comes from FBM_MDP_THREADS.
"""

import argparse
import json
import logging
import sys

from .errors import NumericalError, StabilityError
from .harness import (REGISTRY, ConfigError, ExperimentConfig, errors_only, list_experiments,
                      run_experiment, validate_config)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _parse_set(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = json.loads(v)
        except json.JSONDecodeError:
            out[k.strip()] = v
    return out


def _load(args):
    if getattr(args, "config", None):
        try:
            cfg = ExperimentConfig.from_json(args.config)
        except (OSError, json.JSONDecodeError, TypeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        over = _parse_set(getattr(args, "set", None))
        return cfg.with_updates(**over) if over else cfg
    if getattr(args, "experiment", None):
        d = {"experiment": args.experiment} | _parse_set(args.set)
        try:
            return ExperimentConfig.from_dict(d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
    raise ConfigError("need --config or --experiment")


def build_parser():
    ap = argparse.ArgumentParser(prog="fbm-mdp", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="JSON config file")
    src.add_argument("--experiment", choices=sorted(REGISTRY))
    run.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="override a config field (value parsed as JSON when possible)")
    run.add_argument("--output-dir", help="override output_dir")
    sub.add_parser("list", help="list registered experiments")
    val = sub.add_parser("validate", help="check a config file")
    val.add_argument("--config", required=True)
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "list":
        print(list_experiments())
        return EXIT_OK
    try:
        cfg = _load(args)
        if getattr(args, "output_dir", None):
            cfg = cfg.with_updates(output_dir=args.output_dir)
        problems = validate_config(cfg)
        if args.command == "validate":
            for v in problems:
                print(v)
            return EXIT_CONFIG if errors_only(problems) else EXIT_OK
        for v in problems:
            print(v, file=sys.stderr)
        manifest = run_experiment(cfg)
    except (ConfigError, StabilityError) as exc:
        print(f"config invalid: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(json.dumps({"outputs": manifest.outputs, "input_hash": manifest.input_hash,
                      "summary": manifest.summary}, indent=2, sort_keys=True, default=str))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
