"""Command line entry point: ``magnusgate run|validate|list-experiments``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import __version__
from .config import ConfigError, load_config
from .experiments import EXPERIMENT_DEFAULTS, EXPERIMENTS, listing, run_experiment, write_outputs
from .focal_field import QuadratureError
from .gate import StepSizeError
from .ion_model import PhysicsRejection
from .scans import THREADS_ENV

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PHYSICS = 3
EXIT_NUMERICAL = 4


def _report(kind: str, message: str, code: int, **extra) -> int:
    payload = {"error": kind, "message": message, "exit_code": code}
    payload.update(extra)
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
    return code


def _load(path, allow_large_cutoff=False):
    ec = load_config(path, EXPERIMENT_DEFAULTS)
    if ec.experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {ec.experiment!r}; see list-experiments",
                          "experiment")
    if allow_large_cutoff:
        ec.simulation["allow_large_cutoff"] = True
    return ec


def _guarded(fn) -> int:
    try:
        return fn()
    except ConfigError as exc:
        return _report("config", str(exc), EXIT_CONFIG, key=exc.key, line=exc.line)
    except PhysicsRejection as exc:
        return _report("physics", str(exc), EXIT_PHYSICS)
    except ResourceWarning as exc:
        return _report("resource", f"{exc}; pass --allow-large-cutoff", EXIT_CONFIG)
    except (StepSizeError, QuadratureError, ArithmeticError, FloatingPointError,
            np.linalg.LinAlgError) as exc:
        return _report("numerical", str(exc), EXIT_NUMERICAL, type=type(exc).__name__)


def cmd_run(args) -> int:
    def go():
        ec = _load(args.config, args.allow_large_cutoff)
        table = run_experiment(ec, args.threads)
        primary, sidecar = write_outputs(ec, table)
        print(json.dumps({"experiment": ec.experiment, "primary": str(primary),
                          "sidecar": str(sidecar), "rows": len(table.rows)}, sort_keys=True))
        return EXIT_OK
    return _guarded(go)


def cmd_validate(args) -> int:
    def go():
        ec = _load(args.config)
        ec.physical_config().validate()
        print(json.dumps({"valid": True, "experiment": ec.experiment}, sort_keys=True))
        return EXIT_OK
    return _guarded(go)


def cmd_list(args) -> int:
    print(listing())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="magnusgate", description=__doc__)
    p.add_argument("--version", action="version", version=f"magnusgate {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the experiment described by a config file")
    r.add_argument("config")
    r.add_argument("--threads", type=int, default=None,
                   help=f"parallel scan points (default: ${THREADS_ENV} or 1)")
    r.add_argument("--allow-large-cutoff", action="store_true",
                   help="permit Fock cutoffs above 40 (slow)")
    r.set_defaults(func=cmd_run)
    v = sub.add_parser("validate", help="check a config file without running it")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)
    ls = sub.add_parser("list-experiments", help="list the available experiments")
    ls.set_defaults(func=cmd_list)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
