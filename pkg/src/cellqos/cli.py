"""Command-line entry point: ``cellqos <stage> [options]``.

Stage summaries go to stdout as one JSON object. Failures print a single
``cellqos-error {...}`` JSON line to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import __version__
from .pipeline import STAGES, ConfigError, load_config_file, resolve_config
from .regressor import FORMAT_NAME, FORMAT_VERSION

logger = logging.getLogger("cellqos")

EXIT_STAGE_ERROR = 1
EXIT_CONFIG_ERROR = 2

# per stage: flag -> config key; --in/--out are always the primary input/output
STAGE_PATHS = {
    "synth": {},
    "ingest": {"--in": "cells", "--splits": "splits", "--out": "cells_clean"},
    "kpi": {"--in": "throughput", "--slots": "slots", "--out": "kpi", "--excluded": "kpi_excluded"},
    "neighbors": {"--in": "cells", "--splits": "splits", "--out": "neighbors"},
    "features": {"--in": "cells", "--splits": "splits", "--kpi": "kpi", "--landuse": "landuse",
                 "--out": "features"},
    "weights": {"--in": "features", "--kpi": "kpi", "--splits": "splits", "--out": "weights"},
    "train": {"--in": "features", "--kpi": "kpi", "--weights": "weights", "--out": "model",
              "--encoder": "encoder", "--trials": "trials"},
    "evaluate": {"--in": "features", "--kpi": "kpi", "--model": "model", "--encoder": "encoder",
                 "--predictions": "predictions", "--out": "report"},
    "pipeline": {},
}

HELP = {
    "synth": "generate a synthetic dataset into --workdir",
    "ingest": "validate the cells table and split manifest",
    "kpi": "compute the KPI per cell from throughput and slot tables",
    "neighbors": "export neighbor and interferer pairs (plot data)",
    "features": "build the feature matrix",
    "weights": "compute LDS sample weights for training rows",
    "train": "fit the boosted-tree model (optionally after random search)",
    "evaluate": "predict and write the scoped error report",
    "pipeline": "run ingest through evaluate in order",
}


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="flat key=value configuration file")
    p.add_argument("--workdir", help="base directory for relative paths")
    p.add_argument("--threads", type=int, help="worker threads (default: machine parallelism)")
    p.add_argument("--seed", type=int)
    p.add_argument("--x", type=float, help="KPI throughput threshold in Mbps (a bin edge)")
    p.add_argument("--theta", type=float, help="coverage threshold on the 0-100 scale")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any configuration key (repeatable)")
    p.add_argument("-q", "--quiet", action="store_true", help="log warnings only")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cellqos", description="Cell-level KPI estimation pipeline.")
    parser.add_argument("--version", action="version",
                        version=f"cellqos {__version__} ({FORMAT_NAME} v{FORMAT_VERSION})")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common()
    for name in STAGES:
        sp = sub.add_parser(name, parents=[common], help=HELP[name])
        for flag, key in STAGE_PATHS[name].items():
            sp.add_argument(flag, dest=f"path_{key}", metavar="PATH", help=f"path for {key}")
        if name == "synth":
            sp.add_argument("--cities", type=int, dest="synth_cities")
            sp.add_argument("--sites", type=int, dest="synth_sites", help="sites per city and operator")
            sp.add_argument("--test-cities", type=int, dest="synth_test_cities")
        if name in ("train", "pipeline"):
            sp.add_argument("--search-trials", type=int, dest="search_trials")
            sp.add_argument("--lds", action="store_const", const="true", help="train with LDS weights")
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    out = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    for key in ("workdir", "threads", "seed", "x", "theta", "synth_cities", "synth_sites",
                "synth_test_cities", "search_trials", "lds"):
        v = getattr(args, key, None)
        if v is not None:
            out[key] = v
    for key, v in vars(args).items():
        if key.startswith("path_") and v is not None:
            out[key[len("path_"):]] = v
    return out


def _fail(stage: str, exc: BaseException, code: int) -> int:
    msg = " ".join(str(exc).split()) or type(exc).__name__
    print("cellqos-error " + json.dumps({"stage": stage, "type": type(exc).__name__, "message": msg}),
          file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    stage = args.command
    try:
        file_values = load_config_file(args.config) if args.config else {}
        cfg = resolve_config(file_values, _overrides(args))
    except (ConfigError, OSError) as exc:
        return _fail(stage, exc, EXIT_CONFIG_ERROR)
    for line in cfg.to_text().splitlines():
        logger.info("config %s", line)
    try:
        summary = STAGES[stage](cfg)
    except Exception as exc:  # noqa: BLE001 - every stage failure becomes one error line
        return _fail(stage, exc, EXIT_STAGE_ERROR)
    print(json.dumps(summary, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
