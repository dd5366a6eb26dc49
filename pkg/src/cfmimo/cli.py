"""Command line front end.

    cfmimo run   --config cfg.txt --out results/ [--scheme dappa/wsrm/maxmin]
    cfmimo sweep --config cfg.txt --out results/ --axis U --values 20,40,60

Flags override config-file values; --set key=value handles any remaining
key. Reports (CSV + metadata + figures) land in --out.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import apply_scheme, load_config
from .errors import ConfigError
from .harness import emit_outputs, run_experiment, sweep


def _add_common(parser):
    parser.add_argument("--config", default=None, help="flat key=value config file")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--workers", type=int, default=None)
    parser.add_argument("--batches", type=int, default=None)
    parser.add_argument("--scheme", default=None,
                        help="association/pilot/data, e.g. dappa/wsrm/maxmin")
    parser.add_argument("--set", dest="sets", action="append", default=[],
                        metavar="KEY=VALUE", help="override any config key")
    parser.add_argument("--no-figures", action="store_true",
                        help="skip PNG rendering, keep CSVs only")
    parser.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cfmimo",
        description="Uplink cell-free massive MIMO spectral-efficiency runs")
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="single experiment point")
    _add_common(run_p)
    sweep_p = sub.add_parser("sweep", help="repeat along one axis")
    _add_common(sweep_p)
    sweep_p.add_argument("--axis", required=True,
                         help="one of U, L, tau, kappa, M")
    sweep_p.add_argument("--values", required=True,
                         help="comma-separated axis values")
    return parser


def _config_from_args(args):
    overrides = {}
    for item in args.sets:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, value = item.partition("=")
        overrides[key.strip()] = value.strip()
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.batches is not None:
        overrides["batches"] = args.batches
    config = load_config(args.config, overrides)
    if args.scheme:
        config = apply_scheme(config, args.scheme)
    return config.validate()


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = _config_from_args(args)
        if args.command == "run":
            results = [run_experiment(config)]
        else:
            values = [v for v in args.values.split(",") if v.strip()]
            if not values:
                raise ConfigError("--values is empty")
            results = sweep(config, args.axis, values)
        emit_outputs(results, args.out, base_config=config,
                     figures=not args.no_figures)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for result in results:
        point = "" if result.axis is None else \
            f" {result.axis}={result.axis_value:g}"
        print(f"{result.scheme}{point}: mean SE {result.mean_se:.4f} "
              f"bit/s/Hz, 95%-likely {result.se_p5:.4f}, "
              f"{len(result.failures)} failed batches")
    print(f"outputs written to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
