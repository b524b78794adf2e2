"""Command-line entry point: ``dlnflow <experiment> [options]``."""

from __future__ import annotations

import argparse
import json
import sys

from . import io
from .errors import InvalidParameterError
from .experiments import EXPERIMENTS, ExperimentConfig, run_experiment


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key = value or JSON file; command-line flags win")
    p.add_argument("--output-dir", help=f"output directory (default ${io.OUTPUT_ROOT_ENV} or ./{io.DEFAULT_OUTPUT_ROOT})")
    p.add_argument("--seed", type=int)
    p.add_argument("--theta", type=float)


def _flow(p: argparse.ArgumentParser):
    p.add_argument("--n", type=int, help="Fourier modes per direction")
    p.add_argument("--nu", type=float, help="viscosity")
    p.add_argument("--T-final", dest="T_final", type=float)
    p.add_argument("--mode", choices=("fully_implicit", "linearly_implicit"))


def _forced(p: argparse.ArgumentParser):
    p.add_argument("--amplitude", type=float)
    p.add_argument("--forcing-mode", type=int)
    p.add_argument("--perturbation", type=float, help="RMS of a seeded initial perturbation")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dlnflow", description=__doc__)
    sub = parser.add_subparsers(dest="experiment", required=True)

    p = sub.add_parser("convergence", help="temporal order on the Taylor-Green vortex")
    _common(p), _flow(p)
    p.add_argument("--k", type=float, help="coarsest step")
    p.add_argument("--levels", type=int)
    p.add_argument("--w", type=int)

    p = sub.add_parser("stability-region", help="boundary locus of the stability region")
    _common(p)
    p.add_argument("--samples", type=int)
    p.add_argument("--method", choices=("dln", "bdf2"))

    p = sub.add_parser("energy-compare", help="DLN vs BDF2 energy ledgers on the forced testbed")
    _common(p), _flow(p), _forced(p)
    p.add_argument("--schedule", dest="step_law", choices=("constant", "sine", "increasing"))
    p.add_argument("--k", type=float, help="step for the constant schedule")

    p = sub.add_parser("adaptive", help="dissipation-ratio step control on the forced testbed")
    _common(p), _flow(p), _forced(p)
    p.add_argument("--delta", type=float)
    p.add_argument("--k-min", type=float)
    p.add_argument("--k-max", type=float)

    p = sub.add_parser("g-identity-fuzz", help="randomized check of the G-stability identity")
    _common(p)
    p.add_argument("--samples", type=int)
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    values = io.load_config(args.config) if args.config else {}
    values.pop("experiment", None)
    for key, value in vars(args).items():
        if key not in ("config", "experiment") and value is not None:
            values[key] = value
    return ExperimentConfig.from_mapping(dict(values, experiment=args.experiment))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
    except (InvalidParameterError, OSError, TypeError) as exc:
        print(json.dumps({"experiment": args.experiment, "exit_code": 2,
                          "error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2
    result = run_experiment(config)
    if result.exit_code:
        print(json.dumps(result.error, sort_keys=True), file=sys.stderr)
    else:
        for path in result.outputs:
            print(path)
        print(json.dumps(result.summary, default=str, sort_keys=True))
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
